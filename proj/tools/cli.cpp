#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "nus/backend.hpp"
#include "nus/imagecore.hpp"
#include "nus/saliency.hpp"
#include "nus/styler.hpp"

namespace nus::cli {

namespace fs = std::filesystem;

namespace {

/// Invalid flag combination detected after parsing.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr int kDefaultMaxSide = 512;
constexpr int kProgressEvery = 50;

struct Options {
    // shared
    std::string backend = "vgg";
    std::string weights;
    std::string config;
    int max_side = kDefaultMaxSide;
    std::string content;
    std::string output;

    // mask generation
    std::string method;
    std::optional<int> patch_size;
    std::string shifts;
    std::string superpixel_params;
    std::string fill_color;
    double alpha_min = 0.0;
    double alpha_max = 1.0;
    std::string segmentation_map;

    // stylize
    std::string style;
    std::optional<double> uniform_alpha;
    std::string mask;
    std::string save_mask;
    int iterations = kDefaultIterations;
    double step_size = kDefaultStepSize;
    double style_weight = 1.0;
    std::string init = "content";
    std::uint64_t seed = 0;
    std::string trace;

    // classify
    int topk = 5;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep))
        if (!trim(item).empty()) parts.push_back(trim(item));
    return parts;
}

double parse_number(const std::string& text, const std::string& what) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw UsageError("cannot parse " + what + " value '" + text + "'");
    }
    if (used != text.size()) throw UsageError("cannot parse " + what + " value '" + text + "'");
    return v;
}

int parse_int(const std::string& text, const std::string& what) {
    const double v = parse_number(text, what);
    if (v != std::floor(v)) throw UsageError(what + " value '" + text + "' must be an integer");
    return static_cast<int>(v);
}

std::vector<GridShift> parse_shifts(const std::string& text) {
    std::vector<GridShift> out;
    for (const std::string& pair : split(text, ';')) {
        const auto v = split(pair, ',');
        if (v.size() != 2) throw UsageError("--shifts expects \"dy,dx;dy,dx\"");
        out.push_back({parse_int(v[0], "--shifts"), parse_int(v[1], "--shifts")});
    }
    if (out.empty()) throw UsageError("--shifts is empty");
    return out;
}

std::vector<SuperpixelParams> parse_superpixels(const std::string& text) {
    std::vector<SuperpixelParams> out;
    for (const std::string& pair : split(text, ';')) {
        const auto v = split(pair, ',');
        if (v.size() != 2) throw UsageError("--superpixel-params expects \"n,c;n,c\"");
        out.push_back({parse_int(v[0], "--superpixel-params"), parse_number(v[1], "--superpixel-params")});
    }
    if (out.empty()) throw UsageError("--superpixel-params is empty");
    return out;
}

Rgb parse_rgb(const std::string& text) {
    const auto v = split(text, ',');
    if (v.size() != 3) throw UsageError("--fill-color expects \"r,g,b\"");
    return Rgb(parse_number(v[0], "--fill-color"), parse_number(v[1], "--fill-color"), parse_number(v[2], "--fill-color"));
}

MaskMethodConfig mask_config(const Options& o) {
    MaskMethodConfig config;
    if (!o.method.empty()) {
        try {
            config.method = parse_mask_method(o.method);
        } catch (const ArgumentError& e) {
            throw UsageError(e.what());
        }
    }
    config.patch_size = o.patch_size;
    if (!o.shifts.empty()) config.grid_shifts = parse_shifts(o.shifts);
    if (!o.superpixel_params.empty()) config.superpixel_params = parse_superpixels(o.superpixel_params);
    if (!o.fill_color.empty()) config.fill_color = parse_rgb(o.fill_color);
    config.alpha_min = o.alpha_min;
    config.alpha_max = o.alpha_max;
    if (config.method == MaskMethod::segmentation && o.segmentation_map.empty())
        throw UsageError("--method segmentation requires --segmentation-map");
    if (config.method != MaskMethod::segmentation && !o.segmentation_map.empty())
        throw UsageError("--segmentation-map is only used with --method segmentation");
    try {
        config.validate();
    } catch (const ArgumentError& e) {
        throw UsageError(e.what());
    }
    return config;
}

std::unique_ptr<Backend<float>> open_backend(const Options& o, std::ostream& err) {
    if (o.backend == "toy") return make_toy_backend<float>();
    auto backend = load_pretrained<float>(resolve_weights_path(o.weights));
    err << "vgg19 weights checksum " << backend->weights_checksum() << "\n";
    return backend;
}

Imagef fit_working_resolution(const Imagef& image, int max_side, const std::string& what, std::ostream& err) {
    const int longest = std::max(image.height(), image.width());
    if (longest <= max_side) return image;
    const double scale = static_cast<double>(max_side) / longest;
    const int h = std::max(1, static_cast<int>(std::lround(image.height() * scale)));
    const int w = std::max(1, static_cast<int>(std::lround(image.width() * scale)));
    err << what << " resized from " << image.width() << "x" << image.height() << " to working resolution " << w << "x" << h
        << "\n";
    return resize_image(image, h, w);
}

fs::path mask_base(const std::string& output) {
    fs::path base = output;
    if (base.extension() == ".alphamap" || base.extension() == ".png") base.replace_extension();
    return base;
}

void write_mask_pair(const AlphaMapf& mask, const std::string& output, std::ostream& out) {
    const fs::path base = mask_base(output);
    fs::path alphamap = base, png = base;
    alphamap += ".alphamap";
    png += ".png";
    write_alphamap(mask, alphamap);
    save_mask_png(mask, png);
    out << "wrote " << alphamap.string() << " and " << png.string() << "\n";
}

MaskResult<float> build_mask(const Options& o, const MaskMethodConfig& config, const Imagef& content,
                             const Backend<float>& backend, std::ostream& out) {
    std::optional<RegionPartition> segmentation;
    if (config.method == MaskMethod::segmentation)
        segmentation = resize_partition(load_label_map(o.segmentation_map), content.height(), content.width());
    MaskResult<float> result = generate_mask_detailed(content, config, backend, segmentation);
    int regions = 0;
    double lo = result.passes.front().score_min, hi = result.passes.front().score_max;
    for (std::size_t i = 0; i < result.passes.size(); ++i) {
        const PassSummary& p = result.passes[i];
        out << "pass " << i + 1 << ": " << p.description << ": regions=" << p.region_count << " score_min=" << p.score_min
            << " score_max=" << p.score_max << " max_region=" << p.max_region << "\n";
        regions += p.region_count;
        lo = std::min(lo, p.score_min);
        hi = std::max(hi, p.score_max);
    }
    out << "method: " << to_string(config.method) << "\n";
    out << "regions scored: " << regions << "\n";
    out << "score range: [" << lo << ", " << hi << "]\n";
    out << "max-score region: " << result.passes.front().max_region << "\n";
    return result;
}

int cmd_mask(const Options& o, std::ostream& out, std::ostream& err) {
    const MaskMethodConfig config = mask_config(o);
    auto backend = open_backend(o, err);
    const Imagef content = fit_working_resolution(load_image<float>(o.content), o.max_side, "content", err);
    const MaskResult<float> result = build_mask(o, config, content, *backend, out);
    write_mask_pair(result.mask, o.output, out);
    return kExitOk;
}

int cmd_stylize(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.uniform_alpha && !o.mask.empty()) throw UsageError("--uniform-alpha and --mask are mutually exclusive");
    if (o.uniform_alpha && !(*o.uniform_alpha >= 0)) throw UsageError("--uniform-alpha must be non-negative");
    const bool generate = !o.uniform_alpha && o.mask.empty();
    std::optional<MaskMethodConfig> config;
    if (generate) config = mask_config(o);
    StyleConfig style_config;
    style_config.iterations = o.iterations;
    style_config.step_size = o.step_size;
    style_config.style_weight = o.style_weight;
    style_config.random_seed = o.seed;
    try {
        style_config.init_mode = parse_init_mode(o.init);
    } catch (const ArgumentError& e) {
        throw UsageError(e.what());
    }

    auto backend = open_backend(o, err);
    const BackendDescriptor& d = backend->descriptor();
    for (const std::string& l : d.content_layers) style_config.content_layers.push_back({l, 1.0});
    for (const std::string& l : d.style_layers) style_config.style_layers.push_back({l, 1.0});
    try {
        style_config.validate();
    } catch (const ArgumentError& e) {
        throw UsageError(e.what());
    }

    const Imagef content = fit_working_resolution(load_image<float>(o.content), o.max_side, "content", err);
    const Imagef style = fit_working_resolution(load_image<float>(o.style), std::max(content.height(), content.width()),
                                                "style", err);

    AlphaMapf alpha;
    if (o.uniform_alpha) {
        alpha = AlphaMapf::Constant(content.height(), content.width(), static_cast<float>(*o.uniform_alpha));
    } else if (!o.mask.empty()) {
        alpha = read_alphamap(o.mask);
        if (alpha.rows() != content.height() || alpha.cols() != content.width())
            throw ArgumentError("mask dimension mismatch: " + o.mask + " is " + std::to_string(alpha.cols()) + "x" +
                                std::to_string(alpha.rows()) + " but the working content image is " +
                                std::to_string(content.width()) + "x" + std::to_string(content.height()));
        if ((alpha < 0.0f).any()) throw ArgumentError("mask " + o.mask + " contains negative weights");
    } else {
        alpha = build_mask(o, *config, content, *backend, out).mask;
    }
    if (!o.save_mask.empty()) write_mask_pair(alpha, o.save_mask, out);

    const auto progress = [&](const TraceRow& row) {
        if (row.iteration % kProgressEvery == 0 || row.iteration == style_config.iterations)
            err << "iteration " << row.iteration << " content " << row.content_loss << " style " << row.style_loss
                << " total " << row.total_loss << "\n";
    };
    const StylizeResult<float> result = stylize(content, style, alpha, style_config, *backend, progress);
    save_image(result.image, o.output);
    out << "wrote " << o.output << "\n";
    if (!o.trace.empty()) {
        write_trace_csv(result.trace, o.trace);
        out << "wrote " << o.trace << "\n";
    }
    return kExitOk;
}

int cmd_classify(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.topk < 1) throw UsageError("--topk must be at least 1");
    auto backend = open_backend(o, err);
    const Imagef image = load_image<float>(o.content);
    const ClassDistribution<float> p = backend->classify(image);
    std::vector<int> order(static_cast<std::size_t>(p.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p(a) > p(b); });
    const auto& names = backend->descriptor().class_names;
    const int k = std::min<int>(o.topk, static_cast<int>(p.size()));
    for (int i = 0; i < k; ++i) {
        const int c = order[static_cast<std::size_t>(i)];
        const std::string name = c < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(c)] : "class_" + std::to_string(c);
        out << i + 1 << "\t" << c << "\t" << name << "\t" << std::fixed << std::setprecision(6) << p(c) << "\n";
        out.unsetf(std::ios::fixed);
    }
    return kExitOk;
}

void add_shared(CLI::App* cmd, Options& o) {
    cmd->add_option("--backend", o.backend, "Classifier backend")->check(CLI::IsMember({"toy", "vgg"}))->capture_default_str();
    cmd->add_option("--weights", o.weights, "VGG weight archive or directory (default: $NUSTYLE_WEIGHTS)");
    cmd->add_option("--config", o.config, "Flat key = value config file; flags override it");
    cmd->add_option("--max-side", o.max_side, "Longest side of the working resolution")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
}

void add_mask_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--method", o.method, "patch | patch-avg | superpixel | segmentation");
    cmd->add_option("--patch-size", o.patch_size, "Patch edge in pixels (default: min(H,W)/8)");
    cmd->add_option("--shifts", o.shifts, "Grid offsets \"dy,dx;dy,dx\" for patch-avg");
    cmd->add_option("--superpixel-params", o.superpixel_params, "SLIC sweep \"segments,compactness;...\"");
    cmd->add_option("--fill-color", o.fill_color, "Occlusion color \"r,g,b\" in [0,1] (default: image mean)");
    cmd->add_option("--alpha-min", o.alpha_min, "Weight for the least important pixels")->capture_default_str();
    cmd->add_option("--alpha-max", o.alpha_max, "Weight for the most important pixels")->capture_default_str();
    cmd->add_option("--segmentation-map", o.segmentation_map, "Grayscale PNG label map for --method segmentation")
        ->check(CLI::ExistingFile);
}

std::vector<std::string> inject_config(const std::vector<std::string>& args, CLI::App& app) {
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (config_path.empty() || args.empty()) return args;

    CLI::App* sub = nullptr;
    try {
        sub = app.get_subcommand(args.front());
    } catch (const CLI::OptionNotFound&) {
        return args;
    }
    std::ifstream in(config_path);
    if (!in) throw UsageError("cannot read config file " + config_path);
    std::stringstream text;
    text << in.rdbuf();

    std::vector<std::string> merged = args;
    for (const auto& [key, value] : parse_config_text(text.str())) {
        const std::string flag = "--" + key;
        if (key == "config") continue;
        if (sub->get_option_no_throw(flag) == nullptr) throw UsageError("unknown config key '" + key + "' for " + args.front());
        const bool on_command_line = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
            return a == flag || a.rfind(flag + "=", 0) == 0;
        });
        if (!on_command_line) {
            merged.push_back(flag);
            merged.push_back(value);
        }
    }
    return merged;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> entries;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError("config line " + std::to_string(number) + " is not key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (key.rfind("--", 0) == 0) key.erase(0, 2);
        if (key.empty()) throw UsageError("config line " + std::to_string(number) + " has an empty key");
        entries[key] = value;
    }
    return entries;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Style transfer with importance-weighted content preservation", "nustyle"};
    app.require_subcommand(1);

    CLI::App* mask = app.add_subcommand("mask", "Generate an importance mask for a content image");
    add_shared(mask, o);
    mask->add_option("--content", o.content, "Content image (PNG or JPEG)")->required()->check(CLI::ExistingFile);
    mask->add_option("--output,--out", o.output, "Output base path; writes <base>.alphamap and <base>.png")->required();
    add_mask_flags(mask, o);

    CLI::App* styl = app.add_subcommand("stylize", "Stylize a content image with a spatially varying weight map");
    add_shared(styl, o);
    styl->add_option("--content", o.content, "Content image")->required()->check(CLI::ExistingFile);
    styl->add_option("--style", o.style, "Style image")->required()->check(CLI::ExistingFile);
    styl->add_option("--output,--out", o.output, "Output PNG")->required();
    styl->add_option("--uniform-alpha", o.uniform_alpha, "Constant weight everywhere (skips mask generation)");
    styl->add_option("--mask", o.mask, "Precomputed .alphamap at the working resolution")->check(CLI::ExistingFile);
    styl->add_option("--save-mask", o.save_mask, "Also write the weight map as <base>.alphamap and <base>.png");
    styl->add_option("--iterations", o.iterations, "Optimizer steps")->check(CLI::NonNegativeNumber)->capture_default_str();
    styl->add_option("--step-size", o.step_size, "Adam step size")->check(CLI::PositiveNumber)->capture_default_str();
    styl->add_option("--style-weight", o.style_weight, "Multiplier on the style loss")->check(CLI::PositiveNumber)->capture_default_str();
    styl->add_option("--init", o.init, "content | random")->capture_default_str();
    styl->add_option("--seed", o.seed, "Seed for random initialization")->capture_default_str();
    styl->add_option("--trace", o.trace, "Write the per-iteration loss trace as CSV");
    add_mask_flags(styl, o);

    CLI::App* cls = app.add_subcommand("classify", "Print the top classes for an image");
    add_shared(cls, o);
    cls->add_option("--content,--image", o.content, "Image to classify")->required()->check(CLI::ExistingFile);
    cls->add_option("--topk", o.topk, "Number of classes to print")->capture_default_str();

    try {
        std::vector<std::string> argv = inject_config(args, app);
        std::reverse(argv.begin(), argv.end());
        app.parse(argv);
        if (mask->parsed()) return cmd_mask(o, out, err);
        if (styl->parsed()) return cmd_stylize(o, out, err);
        return cmd_classify(o, out, err);
    } catch (const CLI::CallForHelp&) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DivergenceError& e) {
        err << "error: optimization diverged at iteration " << e.iteration() << ": " << e.what() << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace nus::cli
