#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cprl/attacks.hpp"
#include "cprl/checkpoint.hpp"
#include "cprl/config.hpp"
#include "cprl/dataset.hpp"
#include "cprl/metrics.hpp"
#include "cprl/model.hpp"
#include "cprl/report.hpp"
#include "cprl/rng.hpp"
#include "cprl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cprl;

namespace {

// Exit codes: 0 ok, 1 unexpected, 2 config, 3 checkpoint, 4 output, 5 dataset.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CliArgs {
    std::string config, out, model, attack, checkpoint, dataset, eps_grid;
    std::uint64_t seed = 0;
    double epsilon = 0.0, b = 0.0, tau = 0.0, lr = 0.0, extent = 0.0;
    std::size_t epochs = 0, scenes = 0, levels = 0, resolution = 0, images = 0;
    bool no_pns = false;
};

void add_common(CLI::App* sub, CliArgs& a) {
    sub->add_option("--config", a.config, "JSON config file; flags override its keys");
    sub->add_option("--seed", a.seed, "master seed");
    sub->add_option("--out", a.out, "output root (default $CPRL_OUT_ROOT, then ./runs)");
    sub->add_option("--model", a.model, "baseline | cprl")
        ->check(CLI::IsMember({"baseline", "cprl"}));
    sub->add_option("--attack", a.attack, "fgsm | pgd | reflect")
        ->check(CLI::IsMember({"fgsm", "pgd", "reflect"}));
    sub->add_option("--epsilon", a.epsilon, "l-inf budget in [0,1] pixel units");
    sub->add_option("--b", a.b, "mask bias");
    sub->add_option("--tau", a.tau, "soft-rank temperature");
    sub->add_flag("--no-pns", a.no_pns, "disable the SF/NC min-max phases");
    sub->add_option("--epsilon-grid", a.eps_grid, "comma-separated ascending epsilons");
    sub->add_option("--checkpoint", a.checkpoint, "parameter file to load");
    sub->add_option("--dataset", a.dataset, "dataset archive to ingest instead of synthesizing");
    sub->add_option("--epochs", a.epochs, "training epochs");
    sub->add_option("--scenes", a.scenes, "synthetic scene count");
    sub->add_option("--levels", a.levels, "distortion levels per family");
    sub->add_option("--lr", a.lr, "learning rate");
    sub->add_option("--landscape-extent", a.extent, "landscape half-extent in pixels");
    sub->add_option("--landscape-resolution", a.resolution, "landscape grid resolution");
    sub->add_option("--landscape-images", a.images, "images per landscape/dump report");
}

std::vector<double> parse_grid(const std::string& s) {
    std::vector<double> grid;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const std::size_t comma = std::min(s.find(',', pos), s.size());
        const std::string tok = s.substr(pos, comma - pos);
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (tok.empty() || end != tok.c_str() + tok.size())
            throw ConfigError("config: bad epsilon-grid entry '" + tok + "'");
        grid.push_back(v);
        pos = comma + 1;
        if (comma == s.size()) break;
    }
    return grid;
}

void apply_overrides(CLI::App* sub, const CliArgs& a, RunConfig& cfg) {
    if (sub->count("--seed")) cfg.seed = a.seed;
    if (sub->count("--out")) cfg.out = a.out;
    if (sub->count("--model")) cfg.model = a.model;
    if (sub->count("--attack")) cfg.attack = a.attack;
    if (sub->count("--epsilon")) cfg.epsilon = a.epsilon;
    if (sub->count("--b")) cfg.b = a.b;
    if (sub->count("--tau")) cfg.tau = a.tau;
    if (sub->count("--no-pns")) cfg.pns = false;
    if (sub->count("--epsilon-grid")) cfg.epsilon_grid = parse_grid(a.eps_grid);
    if (sub->count("--checkpoint")) cfg.checkpoint = a.checkpoint;
    if (sub->count("--dataset")) cfg.dataset_dir = a.dataset;
    if (sub->count("--epochs")) cfg.epochs = a.epochs;
    if (sub->count("--scenes")) cfg.scenes = a.scenes;
    if (sub->count("--levels")) cfg.levels = a.levels;
    if (sub->count("--lr")) cfg.lr = a.lr;
    if (sub->count("--landscape-extent")) cfg.landscape_extent_px = a.extent;
    if (sub->count("--landscape-resolution")) cfg.landscape_resolution = a.resolution;
    if (sub->count("--landscape-images")) cfg.landscape_images = a.images;
}

Dataset load_data(const RunConfig& cfg) {
    if (cfg.dataset_dir.empty()) {
        try {
            return generate(cfg.scenes, cfg.levels, cfg.seed, cfg.image_side);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    try {
        return ingest(cfg.dataset_dir, cfg.image_side, cfg.image_side);
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
}

ModelConfig model_config(const RunConfig& cfg) {
    ModelConfig mc;
    mc.channels = cfg.channels;
    mc.input_side = cfg.image_side;
    mc.bias = cfg.b;
    mc.tau = cfg.tau;
    mc.use_mask = cfg.model == "cprl";
    mc.style_complement = cfg.style_complement;
    return mc;
}

Model load_model(const RunConfig& cfg) {
    if (cfg.checkpoint.empty())
        throw ConfigError("config: this command needs --checkpoint (or the checkpoint key)");
    Model model(model_config(cfg), cfg.seed);
    try {
        model.from_records(load_checkpoint(cfg.checkpoint));
    } catch (const std::exception& e) {
        throw CheckpointError(e.what());
    }
    return model;
}

TrainConfig train_config(const RunConfig& cfg) {
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.beta1 = cfg.beta1;
    tc.beta2 = cfg.beta2;
    tc.adam_eps = cfg.adam_eps;
    tc.weight_decay = cfg.weight_decay;
    tc.grad_clip = cfg.grad_clip;
    tc.seed = cfg.seed;
    tc.pns = cfg.pns;
    tc.full_objective = cfg.full_objective;
    return tc;
}

SweepOptions sweep_options(const RunConfig& cfg) {
    SweepOptions opt;
    opt.family = cfg.attack;
    opt.batch_size = cfg.batch_size;
    opt.pgd_steps = cfg.pgd_steps;
    opt.pgd_alpha = cfg.pgd_alpha;
    return opt;
}

json base_report(const RunConfig& cfg, const char* command) {
    json j;
    j["command"] = command;
    j["config"] = config_to_json(cfg);
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    return j;
}

Tensor sample_tensor(const Dataset& ds, std::size_t i) {
    const auto& s = ds.samples[i];
    return Tensor::from_data({1, ds.channels, ds.height, ds.width}, s.image, false);
}

std::vector<double> fgsm_direction(const Model& model, const Tensor& x, double y) {
    Tensor xt = Tensor::from_data(x.shape(), {x.data().begin(), x.data().end()}, true);
    Tensor loss = ops::squared_error(model.predict(xt), Tensor::from_data({1}, {y}, false));
    backward(loss);
    std::vector<double> dir(xt.grad().begin(), xt.grad().end());
    for (auto& g : dir) g = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
    return dir;
}

std::vector<double> rademacher_direction(std::size_t n, std::uint64_t seed, std::size_t image) {
    Rng rng(mix_seed(seed, 0x1a5d + image));
    std::vector<double> dir(n);
    for (auto& v : dir) v = rng.below(2) ? 1.0 : -1.0;
    return dir;
}

int cmd_generate(const RunConfig& cfg) {
    const Dataset ds = load_data(cfg);
    const SplitSpec spec = make_split(ds, cfg.seed);
    const std::string dir = create_run_dir(cfg.out, config_hash(cfg));
    try {
        export_archive(ds, (fs::path(dir) / "dataset").string());
    } catch (const std::exception& e) {
        throw OutputError(e.what());
    }
    save_split((fs::path(dir) / "split.json").string(), spec);
    json rep = base_report(cfg, "generate");
    rep["results"]["samples"] = ds.samples.size();
    rep["results"]["train_scenes"] = spec.train_scenes.size();
    rep["results"]["test_scenes"] = spec.test_scenes.size();
    write_json((fs::path(dir) / "report.json").string(), rep);
    std::printf("%s\n", dir.c_str());
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const Dataset ds = load_data(cfg);
    const SplitSpec spec = make_split(ds, cfg.seed);
    const auto [train_set, test_set] = apply_split(ds, spec);
    Model model(model_config(cfg), cfg.seed);
    FitResult fr = fit(model, train_set, test_set, train_config(cfg), /*log=*/true);

    const std::string dir = create_run_dir(cfg.out, config_hash(cfg));
    save_split((fs::path(dir) / "split.json").string(), spec);
    write_text((fs::path(dir) / "curve.csv").string(), curve_csv(fr.curve));
    save_checkpoint((fs::path(dir) / "final.ckpt").string(), model.to_records());
    save_checkpoint((fs::path(dir) / "best.ckpt").string(), fr.best);

    json rep = base_report(cfg, "train");
    rep["architecture"] = model.architecture();
    rep["results"]["best_epoch"] = fr.best_epoch;
    rep["results"]["best_srcc"] = fr.best_srcc ? json(*fr.best_srcc) : json("undefined");
    rep["results"]["final_test"] = metric_json(evaluate_model(model, test_set, cfg.batch_size));
    rep["results"]["train_samples"] = train_set.samples.size();
    rep["results"]["test_samples"] = test_set.samples.size();
    write_json((fs::path(dir) / "report.json").string(), rep);
    std::printf("%s\n", dir.c_str());
    return 0;
}

int cmd_attack(const RunConfig& cfg) {
    Model model = load_model(cfg);
    const Dataset ds = load_data(cfg);
    const auto [train_set, test_set] = apply_split(ds, make_split(ds, cfg.seed));
    (void)train_set;
    const ScoreFn score = [&](const Tensor& x) { return model.predict(x); };

    const MetricTriple clean = evaluate_model(model, test_set, cfg.batch_size);
    const auto rows = attack_sweep(score, test_set, {cfg.epsilon}, sweep_options(cfg));

    const std::string dir = create_run_dir(cfg.out, config_hash(cfg));
    json rep = base_report(cfg, "attack");
    rep["architecture"] = model.architecture();
    rep["results"]["attack"] = cfg.attack;
    rep["results"]["epsilon"] = cfg.epsilon;
    rep["results"]["clean"] = metric_json(clean);
    rep["results"]["attacked"] = metric_json(rows[0].metrics);
    write_json((fs::path(dir) / "report.json").string(), rep);
    std::printf("%s\n", dir.c_str());
    return 0;
}

int cmd_sweep(const RunConfig& cfg) {
    Model model = load_model(cfg);
    const Dataset ds = load_data(cfg);
    const auto [train_set, test_set] = apply_split(ds, make_split(ds, cfg.seed));
    (void)train_set;
    const ScoreFn score = [&](const Tensor& x) { return model.predict(x); };
    const auto rows = attack_sweep(score, test_set, cfg.epsilon_grid, sweep_options(cfg));

    const std::string dir = create_run_dir(cfg.out, config_hash(cfg));
    write_text((fs::path(dir) / "sweep.csv").string(), sweep_csv(rows));
    json rep = base_report(cfg, "sweep");
    rep["architecture"] = model.architecture();
    const std::string hash = config_hash(cfg);
    json table = json::array();
    for (const auto& r : rows) {
        json row;
        row["config_hash"] = hash;
        row["epsilon"] = r.epsilon;
        row["metrics"] = metric_json(r.metrics);
        table.push_back(row);
    }
    rep["results"]["sweep"] = table;
    write_json((fs::path(dir) / "report.json").string(), rep);
    std::printf("%s\n", dir.c_str());
    return 0;
}

int cmd_landscape(const RunConfig& cfg) {
    Model model = load_model(cfg);
    const Dataset ds = load_data(cfg);
    const auto [train_set, test_set] = apply_split(ds, make_split(ds, cfg.seed));
    (void)train_set;
    const std::size_t count = std::min<std::size_t>(cfg.landscape_images, test_set.samples.size());
    if (count == 0) throw DataError("landscape: test split is empty");

    const std::string dir = create_run_dir(cfg.out, config_hash(cfg));
    const std::string hash = config_hash(cfg);
    json rep = base_report(cfg, "landscape");
    rep["architecture"] = model.architecture();
    json per_image = json::array();
    json axes;
    for (std::size_t i = 0; i < count; ++i) {
        const Tensor x = sample_tensor(test_set, i);
        const auto dir_a = fgsm_direction(model, x, test_set.samples[i].label);
        const auto dir_b = rademacher_direction(x.size(), cfg.seed, i);
        const LandscapeGrid grid =
            landscape([&](const Tensor& xx) { return model.predict(xx).at(0); }, x, dir_a, dir_b,
                      cfg.landscape_extent_px, cfg.landscape_resolution);
        char name[48];
        std::snprintf(name, sizeof name, "landscape_%03zu.csv", i);
        write_text((fs::path(dir) / name).string(), landscape_csv(grid));
        if (i == 0) {
            axes["extent_px"] = grid.extent_px;
            axes["resolution"] = grid.resolution;
            axes["offsets_px"] = grid.offsets_px;
            axes["direction_a"] = "fgsm sign gradient";
            axes["direction_b"] = "seeded rademacher";
        }
        const auto [lo, hi] = std::minmax_element(grid.scores.begin(), grid.scores.end());
        json row;
        row["config_hash"] = hash;
        row["image"] = i;
        row["min"] = *lo;
        row["max"] = *hi;
        row["range"] = *hi - *lo;
        per_image.push_back(row);
    }
    write_json((fs::path(dir) / "landscape_axes.json").string(), axes);
    rep["results"]["images"] = per_image;
    write_json((fs::path(dir) / "report.json").string(), rep);
    std::printf("%s\n", dir.c_str());
    return 0;
}

int cmd_dump(const RunConfig& cfg) {
    Model model = load_model(cfg);
    const Dataset ds = load_data(cfg);
    const auto [train_set, test_set] = apply_split(ds, make_split(ds, cfg.seed));
    (void)train_set;
    if (test_set.samples.empty()) throw DataError("dump: test split is empty");

    const Tensor x = sample_tensor(test_set, 0);
    const double y = test_set.samples[0].label;
    const ScoreFn score = [&](const Tensor& xx) { return model.predict(xx); };
    const Tensor x_adv = fgsm(score, x, {y}, cfg.epsilon).x_adv;
    const Tensor f_clean = model.features(x);
    const Tensor f_adv = model.features(x_adv);
    const auto pairs = activation_dump({f_clean.data().begin(), f_clean.data().end()},
                                       {f_adv.data().begin(), f_adv.data().end()});

    const std::string dir = create_run_dir(cfg.out, config_hash(cfg));
    write_text((fs::path(dir) / "activations.csv").string(), activations_csv(pairs));
    json rep = base_report(cfg, "dump");
    rep["architecture"] = model.architecture();
    rep["results"]["channels"] = pairs.size();
    rep["results"]["epsilon"] = cfg.epsilon;
    rep["results"]["image"] = 0;
    write_json((fs::path(dir) / "report.json").string(), rep);
    std::printf("%s\n", dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"soft-rank channel activation lab: synthetic IQA models, min-max training, "
                 "sign-gradient attacks"};
    app.require_subcommand(1);
    CliArgs args;
    CLI::App* sub_generate = app.add_subcommand("generate", "synthesize a dataset archive");
    CLI::App* sub_train = app.add_subcommand("train", "train a model and write curve + checkpoints");
    CLI::App* sub_attack = app.add_subcommand("attack", "evaluate a checkpoint under one attack");
    CLI::App* sub_sweep = app.add_subcommand("sweep", "attack across an epsilon grid");
    CLI::App* sub_landscape = app.add_subcommand("landscape", "score surface around test images");
    CLI::App* sub_dump = app.add_subcommand("dump", "clean vs adversarial channel activations");
    for (CLI::App* sub :
         {sub_generate, sub_train, sub_attack, sub_sweep, sub_landscape, sub_dump})
        add_common(sub, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    CLI::App* active = app.get_subcommands().front();

    try {
        RunConfig cfg;
        if (!args.config.empty()) cfg = load_config(args.config);
        apply_overrides(active, args, cfg);
        cfg.finalize();

        if (active == sub_generate) return cmd_generate(cfg);
        if (active == sub_train) return cmd_train(cfg);
        if (active == sub_attack) return cmd_attack(cfg);
        if (active == sub_sweep) return cmd_sweep(cfg);
        if (active == sub_landscape) return cmd_landscape(cfg);
        return cmd_dump(cfg);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const CheckpointError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const OutputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 5;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
