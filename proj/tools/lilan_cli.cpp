// lilan: data generation, training, evaluation, prediction, benchmarking and studies.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lilan/evaluation.hpp"

using namespace lilan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum class LogLevel { Quiet, Info, Debug };

LogLevel log_level() {
    const char* v = std::getenv("LILAN_LOG");
    if (!v) return LogLevel::Info;
    const std::string s(v);
    if (s == "quiet" || s == "0" || s == "error") return LogLevel::Quiet;
    if (s == "debug" || s == "2") return LogLevel::Debug;
    return LogLevel::Info;
}

void info(const std::string& msg) {
    if (log_level() != LogLevel::Quiet) std::cerr << "[lilan] " << msg << '\n';
}

// ---------------------------------------------------------------------------
// Run configuration

const std::set<std::string> kSubcommands{"gen", "train", "eval", "predict", "bench", "study"};

struct RunConfig {
    std::string subcommand;
    std::string problem;
    json problem_constants = json::object();
    std::uint64_t seed = 0;
    int threads = 1;
    std::optional<long> samples;
    std::optional<int> grid;
    int skip_steps = 0;
    std::string dataset, val_dataset, test_dataset, model, out;

    std::optional<std::string> variant;
    std::optional<int> latent_dim;
    std::optional<std::vector<int>> encoder_hidden, tau_hidden, decoder_hidden;
    bool no_tau = false;

    json train = json::object();
    std::optional<ImplicitSolverConfig> solver;

    std::string study_kind;
    std::vector<int> study_settings;
    std::string subsample_mode = "random";

    std::vector<double> x0, params, times;
    long sample = -1;
    bool write_predictions = false;
    bool single_precision = false;

    [[nodiscard]] json to_json() const;
    static RunConfig from_json(const json& j);
};

template <class T>
json opt_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

json RunConfig::to_json() const {
    return {
        {"subcommand", subcommand},
        {"problem", problem},
        {"problem_constants", problem_constants},
        {"seed", seed},
        {"threads", threads},
        {"samples", opt_json(samples)},
        {"grid", opt_json(grid)},
        {"skip_steps", skip_steps},
        {"dataset", dataset},
        {"val_dataset", val_dataset},
        {"test_dataset", test_dataset},
        {"model", model},
        {"out", out},
        {"architecture",
         {{"variant", opt_json(variant)},
          {"latent_dim", opt_json(latent_dim)},
          {"encoder_hidden", opt_json(encoder_hidden)},
          {"tau_hidden", opt_json(tau_hidden)},
          {"decoder_hidden", opt_json(decoder_hidden)},
          {"no_tau", no_tau}}},
        {"train", train},
        {"solver", solver ? solver->to_json() : json(nullptr)},
        {"study", {{"kind", study_kind}, {"settings", study_settings}, {"subsample_mode", subsample_mode}}},
        {"predict", {{"x0", x0}, {"params", params}, {"times", times}, {"sample", sample}}},
        {"write_predictions", write_predictions},
        {"single_precision", single_precision},
    };
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) fail(ErrorKind::Config, where + " must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!allowed.contains(k)) fail(ErrorKind::Config, "unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& dst) {
    if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<T>();
}

template <class T>
void read(const json& j, const char* key, std::optional<T>& dst) {
    if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<T>();
}

RunConfig RunConfig::from_json(const json& j) {
    check_keys(j,
               {"subcommand", "problem", "problem_constants", "seed", "threads", "samples", "grid", "skip_steps",
                "dataset", "val_dataset", "test_dataset", "model", "out", "architecture", "train", "solver", "study",
                "predict", "write_predictions", "single_precision", "result"},
               "config");
    RunConfig c;
    try {
        read(j, "subcommand", c.subcommand);
        read(j, "problem", c.problem);
        read(j, "problem_constants", c.problem_constants);
        read(j, "seed", c.seed);
        read(j, "threads", c.threads);
        read(j, "samples", c.samples);
        read(j, "grid", c.grid);
        read(j, "skip_steps", c.skip_steps);
        read(j, "dataset", c.dataset);
        read(j, "val_dataset", c.val_dataset);
        read(j, "test_dataset", c.test_dataset);
        read(j, "model", c.model);
        read(j, "out", c.out);
        read(j, "write_predictions", c.write_predictions);
        read(j, "single_precision", c.single_precision);
        if (j.contains("architecture")) {
            const json& a = j.at("architecture");
            check_keys(a, {"variant", "latent_dim", "encoder_hidden", "tau_hidden", "decoder_hidden", "no_tau"},
                       "architecture");
            read(a, "variant", c.variant);
            read(a, "latent_dim", c.latent_dim);
            read(a, "encoder_hidden", c.encoder_hidden);
            read(a, "tau_hidden", c.tau_hidden);
            read(a, "decoder_hidden", c.decoder_hidden);
            read(a, "no_tau", c.no_tau);
        }
        if (j.contains("train") && !j.at("train").is_null()) {
            check_keys(j.at("train"),
                       {"loss", "learning_rate", "epochs", "batch_size", "seed", "val_every", "adam", "history_path",
                        "log_every"},
                       "train");
            c.train = j.at("train");
        }
        if (j.contains("solver") && !j.at("solver").is_null())
            c.solver = ImplicitSolverConfig::from_json(j.at("solver"));
        if (j.contains("study")) {
            const json& s = j.at("study");
            check_keys(s, {"kind", "settings", "subsample_mode"}, "study");
            read(s, "kind", c.study_kind);
            read(s, "settings", c.study_settings);
            read(s, "subsample_mode", c.subsample_mode);
        }
        if (j.contains("predict")) {
            const json& p = j.at("predict");
            check_keys(p, {"x0", "params", "times", "sample"}, "predict");
            read(p, "x0", c.x0);
            read(p, "params", c.params);
            read(p, "times", c.times);
            read(p, "sample", c.sample);
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, std::string("config schema violation: ") + e.what());
    }
    if (!c.subcommand.empty() && !kSubcommands.contains(c.subcommand))
        fail(ErrorKind::Config, "unknown subcommand '" + c.subcommand + "' in config");
    return c;
}

json read_json_file(const std::string& path) {
    if (!fs::exists(path)) fail(ErrorKind::MissingFile, "config file not found: " + path);
    std::ifstream in(path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, "cannot parse config " + path + ": " + e.what());
    }
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size() && tok.find_first_not_of(" \t", used) != std::string::npos)
                throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            fail(ErrorKind::Config, "bad number '" + tok + "' in " + what);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Resolution helpers

const std::map<std::string, std::set<std::string>> kProblemConstants{
    {"robertson", {"sampling", "grid_per_dim"}},
    {"allen_cahn", {"epsilon", "n", "substeps"}},
    {"cahn_hilliard", {"alpha", "gamma", "n", "substeps"}},
};

void require_path(const std::string& path, const std::string& flag) {
    if (path.empty()) fail(ErrorKind::Config, flag + " is required");
}

void require_exists(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) fail(ErrorKind::MissingFile, what + " not found: " + path);
}

/// Dataset paths name the stem; `<stem>.json` must exist.
void require_dataset(const std::string& path, const std::string& flag) {
    require_path(path, flag);
    fs::path stem(path);
    if (stem.extension() == ".json" || stem.extension() == ".bin") stem.replace_extension();
    fs::path meta = stem;
    meta += ".json";
    if (fs::is_directory(stem)) meta = stem / "dataset.json";
    require_exists(meta.string(), "dataset");
}

fs::path dataset_path(const std::string& p) {
    return fs::is_directory(p) ? fs::path(p) / "dataset" : fs::path(p);
}

ProblemSpec resolve_problem(RunConfig& c) {
    if (c.problem.empty()) fail(ErrorKind::Config, "--problem is required");
    const auto it = kProblemConstants.find(c.problem);
    if (it == kProblemConstants.end()) fail(ErrorKind::UnknownName, "unknown problem '" + c.problem + "'");
    check_keys(c.problem_constants, it->second, "problem_constants");
    if (c.grid) {
        if (*c.grid < 2) fail(ErrorKind::Config, "--grid must be at least 2");
        if (c.problem == "robertson") {
            c.problem_constants["sampling"] = "grid";
            c.problem_constants["grid_per_dim"] = *c.grid;
        } else {
            c.problem_constants["n"] = *c.grid;
        }
    }
    return make_problem(c.problem, c.problem_constants);
}

/// Problem a dataset was generated from, rebuilt from its stored constants.
ProblemSpec problem_of(const TrajectoryDataset& ds) {
    const auto it = kProblemConstants.find(ds.problem);
    if (it == kProblemConstants.end()) fail(ErrorKind::UnknownName, "dataset names unknown problem '" + ds.problem + "'");
    json constants = json::object();
    const json stored = ds.metadata.value("constants", json::object());
    for (const auto& key : it->second)
        if (stored.contains(key)) constants[key] = stored.at(key);
    return make_problem(ds.problem, constants);
}

Architecture resolve_architecture(const RunConfig& c, const ProblemSpec& problem) {
    const bool pde = problem.kind == ProblemKind::SemilinearPde;
    const Variant v = variant_from_string(c.variant.value_or(pde ? "full" : "independent"));
    const int m = c.latent_dim.value_or(pde ? problem.state_dim : 5);
    if (m < 1) fail(ErrorKind::Config, "--latent-dim must be positive");
    Architecture a = problem.architecture(v, m);
    if (c.encoder_hidden) a.encoder_hidden = *c.encoder_hidden;
    if (c.tau_hidden) a.tau_hidden = *c.tau_hidden;
    if (c.decoder_hidden) a.decoder_hidden = *c.decoder_hidden;
    a.use_tau = !c.no_tau;
    a.validate();
    return a;
}

TrainConfig resolve_train(const RunConfig& c, const ProblemSpec& problem) {
    json j = c.train;
    if (!j.contains("loss"))
        j["loss"] = to_string(problem.kind == ProblemKind::SemilinearPde ? LossKind::RelL2 : LossKind::ExpProduct);
    if (!j.contains("seed")) j["seed"] = derive_seed(c.seed, 1);
    TrainConfig t;
    try {
        t = TrainConfig::from_json(j);
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, std::string("train config: ") + e.what());
    }
    if (log_level() == LogLevel::Debug) t.log_every = 1;
    else if (log_level() == LogLevel::Info && t.log_every == 0) t.log_every = std::max(1, t.epochs / 10);
    t.validate();
    return t;
}

TrajectoryDataset prepare_train_set(const RunConfig& c, TrajectoryDataset ds) {
    if (c.samples) {
        if (*c.samples < 1 || *c.samples > ds.n_samples())
            fail(ErrorKind::Config, "--samples must be between 1 and the dataset size " + std::to_string(ds.n_samples()));
        ds = subsample(ds, static_cast<std::size_t>(*c.samples), subsample_mode_from_string(c.subsample_mode),
                       derive_seed(c.seed, 2));
    }
    if (c.skip_steps < 0) fail(ErrorKind::Config, "--skip-steps must be non-negative");
    if (c.skip_steps > 0) ds = coarsen_time(ds, c.skip_steps);
    return ds;
}

void write_manifest(const RunConfig& c, const json& extra = json::object()) {
    fs::create_directories(c.out);
    json m = c.to_json();
    for (const auto& [k, v] : extra.items()) m[k] = v;
    std::ofstream(fs::path(c.out) / "run_manifest.json") << m.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_gen(RunConfig& c) {
    require_path(c.out, "--out");
    const ProblemSpec problem = resolve_problem(c);
    if (!c.solver) c.solver = problem.solver;
    c.solver->validate();
    std::size_t n = problem.grid_size;
    if (c.samples) n = static_cast<std::size_t>(*c.samples);
    if (n == 0) fail(ErrorKind::Config, "--samples is required for problem '" + c.problem + "'");
    if (c.threads < 1) fail(ErrorKind::Config, "--threads must be positive");
    info("generating " + std::to_string(n) + " " + c.problem + " trajectories");
    const auto t0 = std::chrono::steady_clock::now();
    TrajectoryDataset ds = generate(problem, n, c.seed, *c.solver, c.threads);
    if (c.skip_steps > 0) ds = coarsen_time(ds, c.skip_steps);
    save_dataset(ds, fs::path(c.out) / "dataset");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    info("wrote " + (fs::path(c.out) / "dataset").string() + ".{json,bin} in " + std::to_string(secs) + " s");
    write_manifest(c);
}

void cmd_train(RunConfig& c) {
    require_path(c.out, "--out");
    require_dataset(c.dataset, "--dataset");
    if (!c.val_dataset.empty()) require_dataset(c.val_dataset, "--val-dataset");
    const TrajectoryDataset full = load_dataset(dataset_path(c.dataset));
    const ProblemSpec problem = problem_of(full);
    if (!c.problem.empty() && c.problem != full.problem)
        fail(ErrorKind::Config, "--problem " + c.problem + " does not match the dataset's " + full.problem);
    c.problem = full.problem;
    const TrajectoryDataset train_ds = prepare_train_set(c, full);
    std::optional<TrajectoryDataset> val;
    if (!c.val_dataset.empty()) val = load_dataset(dataset_path(c.val_dataset));

    const Architecture arch = resolve_architecture(c, problem);
    TrainConfig tcfg = resolve_train(c, problem);
    fs::create_directories(c.out);
    tcfg.history_path = fs::path(c.out) / "history.csv";
    LiLaNModel model(arch, derive_seed(c.seed, 0));
    model.set_transforms(fit_transforms(train_ds, problem.transforms));
    info("training " + to_string(arch.variant) + " model with " + std::to_string(model.parameter_count()) +
         " parameters on " + std::to_string(train_ds.n_samples()) + " samples");
    const TrainResult res = train(model, train_ds, val ? &*val : nullptr, tcfg);
    model.save(c.out);
    tcfg.history_path.reset();
    c.train = tcfg.to_json();
    c.train.erase("history_path");
    c.train.erase("log_every");
    write_manifest(c, {{"result",
                        {{"best_epoch", res.best_epoch},
                         {"best_val_loss", res.best_val_loss},
                         {"clamp_events", res.clamp_events},
                         {"parameter_count", model.parameter_count()}}}});
}

LiLaNModel load_model(const RunConfig& c) {
    require_path(c.model, "--model");
    require_exists((fs::path(c.model) / "model.json").string(), "model");
    return LiLaNModel::load(c.model);
}

void write_predictions_csv(const TrajectoryDataset& ds, const RowMatrix& pred, const fs::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out.precision(17);
    out << "sample,time";
    for (Eigen::Index k = 0; k < pred.cols(); ++k) out << ",x" << k;
    out << '\n';
    for (Eigen::Index i = 0; i < ds.n_samples(); ++i)
        for (Eigen::Index j = 0; j < ds.n_times(); ++j) {
            out << i << ',' << ds.times[static_cast<std::size_t>(j)];
            for (Eigen::Index k = 0; k < pred.cols(); ++k) out << ',' << pred(i * ds.n_times() + j, k);
            out << '\n';
        }
}

void cmd_eval(RunConfig& c) {
    require_path(c.out, "--out");
    require_dataset(c.dataset, "--dataset");
    const LiLaNModel model = load_model(c);
    const TrajectoryDataset ds = load_dataset(dataset_path(c.dataset));
    c.problem = ds.problem;
    const EvalReport rep = evaluate(model, ds);
    rep.write_csv(c.out);
    if (c.write_predictions) write_predictions_csv(ds, predict_dataset(model, ds), fs::path(c.out) / "predictions.csv");
    info("R2 = " + std::to_string(rep.r2) + " over " + std::to_string(rep.n_samples) + " samples");
    write_manifest(c);
}

void cmd_predict(RunConfig& c) {
    require_path(c.out, "--out");
    const LiLaNModel model = load_model(c);
    const Architecture& arch = model.architecture();
    Vector x0, p;
    std::vector<double> times = c.times;
    if (c.sample >= 0) {
        require_dataset(c.dataset, "--dataset");
        const TrajectoryDataset ds = load_dataset(dataset_path(c.dataset));
        if (c.sample >= ds.n_samples()) fail(ErrorKind::Config, "--sample is beyond the dataset");
        x0 = ds.x0.row(c.sample).transpose();
        p = ds.param_dim() > 0 ? Vector(ds.params.row(c.sample).transpose()) : Vector();
        if (times.empty()) times = ds.times;
    } else {
        x0 = Eigen::Map<const Vector>(c.x0.data(), static_cast<Eigen::Index>(c.x0.size()));
        p = Eigen::Map<const Vector>(c.params.data(), static_cast<Eigen::Index>(c.params.size()));
    }
    if (x0.size() != arch.state_dim)
        fail(ErrorKind::Config, "x0 needs " + std::to_string(arch.state_dim) + " values, got " +
                                    std::to_string(x0.size()));
    if (p.size() != arch.param_dim)
        fail(ErrorKind::Config, "params need " + std::to_string(arch.param_dim) + " values, got " +
                                    std::to_string(p.size()));
    if (times.empty()) fail(ErrorKind::Config, "--times is required");

    fs::create_directories(c.out);
    const fs::path path = fs::path(c.out) / "predictions.csv";
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out.precision(17);
    out << "time";
    for (int k = 0; k < arch.state_dim; ++k) out << ",x" << k;
    out << '\n';
    for (double t : times) {
        const Vector x = model.predict(x0, p, t);
        out << t;
        for (Eigen::Index k = 0; k < x.size(); ++k) out << ',' << x[k];
        out << '\n';
    }
    write_manifest(c);
}

void cmd_bench(RunConfig& c) {
    require_path(c.out, "--out");
    const LiLaNModel model = load_model(c);
    if (c.problem.empty()) fail(ErrorKind::Config, "--problem is required");
    if (c.problem == "robertson" && !c.problem_constants.contains("sampling") && !c.grid)
        c.problem_constants["sampling"] = "uniform";
    const ProblemSpec problem = resolve_problem(c);
    if (!c.solver) c.solver = problem.solver;
    const auto n = static_cast<std::size_t>(c.samples.value_or(1000));
    const SpeedReport rep = speed_benchmark(model, problem, n, c.seed, *c.solver, c.single_precision);
    fs::create_directories(c.out);
    rep.write_csv(fs::path(c.out) / "speed.csv");
    info("solver " + std::to_string(rep.solver_seconds) + " s, surrogate " + std::to_string(rep.surrogate_seconds) +
         " s, ratio " + std::to_string(rep.ratio));
    write_manifest(c);
}

void cmd_study(RunConfig& c) {
    require_path(c.out, "--out");
    require_dataset(c.dataset, "--dataset");
    require_dataset(c.val_dataset, "--val-dataset");
    require_dataset(c.test_dataset, "--test-dataset");
    if (c.study_kind.empty()) fail(ErrorKind::Config, "--kind is required");
    const StudyKind kind = study_from_string(c.study_kind);
    if (c.study_settings.empty()) fail(ErrorKind::Config, "--settings is required");
    const TrajectoryDataset train_ds = load_dataset(dataset_path(c.dataset));
    const TrajectoryDataset val = load_dataset(dataset_path(c.val_dataset));
    const TrajectoryDataset test = load_dataset(dataset_path(c.test_dataset));
    const ProblemSpec problem = problem_of(train_ds);
    c.problem = train_ds.problem;

    StudyConfig sc;
    sc.architecture = resolve_architecture(c, problem);
    sc.train = resolve_train(c, problem);
    sc.seed = c.seed;
    sc.settings = c.study_settings;
    sc.subsample_mode = subsample_mode_from_string(c.subsample_mode);
    const auto rows = run_study(kind, sc, train_ds, val, test);
    fs::create_directories(c.out);
    write_study_csv(rows, fs::path(c.out) / "study.csv");
    c.train = sc.train.to_json();
    c.train.erase("history_path");
    c.train.erase("log_every");
    write_manifest(c);
}

[[noreturn]] void exit_with(ErrorKind kind, const std::string& msg) {
    std::string line = msg;
    for (char& ch : line)
        if (ch == '\n' || ch == '\r') ch = ' ';
    std::cerr << "error: category=" << error_category(kind) << " code=" << exit_code(kind) << " message=" << line
              << '\n';
    std::exit(exit_code(kind));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lilan: linear latent network surrogates for stiff ODEs and PDEs"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "lilan 1.0");

    std::string config_path, problem, dataset, val_dataset, test_dataset, model_dir, out, variant, loss, kind;
    std::string settings_s, x0_s, params_s, times_s, mode;
    std::uint64_t seed = 0;
    int latent_dim = 0, epochs = 0, batch = 0, skip = 0, threads = 1, grid = 0;
    long samples = 0, sample = -1;
    double lr = 0.0;
    bool no_tau = false, write_predictions = false, f32 = false;

    auto common = [&](CLI::App* s) {
        s->add_option("--config", config_path, "JSON run configuration; flags override its values");
        s->add_option("--problem", problem, "robertson | allen_cahn | cahn_hilliard");
        s->add_option("--seed", seed, "master seed");
        s->add_option("--out", out, "output directory");
        s->add_option("--threads", threads, "worker cap");
    };
    auto training = [&](CLI::App* s) {
        s->add_option("--dataset", dataset, "training dataset stem or directory");
        s->add_option("--val-dataset", val_dataset, "validation dataset");
        s->add_option("--variant", variant, "full | independent | common_encoder | common_decoder");
        s->add_option("--latent-dim", latent_dim, "latent width per group");
        s->add_option("--loss", loss, "exp_product | abs_relative | rel_l2");
        s->add_option("--epochs", epochs, "training epochs");
        s->add_option("--lr", lr, "Adam learning rate");
        s->add_option("--batch", batch, "mini-batch size (0 = full batch)");
        s->add_option("--skip-steps", skip, "drop this many time points between kept ones");
        s->add_option("--samples", samples, "train on this many samples of the dataset");
        s->add_option("--subsample", mode, "random | stride | grid_corners");
        s->add_flag("--no-tau", no_tau, "replace the learned time transform by the rescaled time");
    };

    auto* gen = app.add_subcommand("gen", "generate a trajectory dataset");
    common(gen);
    gen->add_option("--samples", samples, "number of trajectories (defaults to the full parameter grid)");
    gen->add_option("--grid", grid, "Robertson: points per parameter; PDEs: spatial points");
    gen->add_option("--skip-steps", skip, "store a coarsened time grid");

    auto* trn = app.add_subcommand("train", "train a surrogate");
    common(trn);
    training(trn);

    auto* evl = app.add_subcommand("eval", "score a model on a dataset");
    common(evl);
    evl->add_option("--model", model_dir, "model directory");
    evl->add_option("--dataset", dataset, "dataset stem or directory");
    evl->add_flag("--write-predictions", write_predictions, "also write predictions.csv");

    auto* prd = app.add_subcommand("predict", "predict states at given times");
    common(prd);
    prd->add_option("--model", model_dir, "model directory");
    prd->add_option("--x0", x0_s, "comma-separated initial state");
    prd->add_option("--params", params_s, "comma-separated parameters");
    prd->add_option("--times", times_s, "comma-separated physical times");
    prd->add_option("--dataset", dataset, "take x0, params and times from this dataset");
    prd->add_option("--sample", sample, "sample index within --dataset");

    auto* bch = app.add_subcommand("bench", "time the surrogate against the reference solver");
    common(bch);
    bch->add_option("--model", model_dir, "model directory");
    bch->add_option("--samples", samples, "number of initial conditions (default 1000)");
    bch->add_option("--grid", grid, "PDEs: spatial points");
    bch->add_flag("--f32", f32, "single-precision surrogate inference");

    auto* std_ = app.add_subcommand("study", "run a study and write study.csv");
    common(std_);
    training(std_);
    std_->add_option("--test-dataset", test_dataset, "test dataset");
    std_->add_option("--kind", kind, "sample_reduction | time_coarsening | tau_ablation | latent_expansion");
    std_->add_option("--settings", settings_s, "comma-separated settings");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        exit_with(ErrorKind::Config, e.what());
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        RunConfig c;
        if (!config_path.empty()) c = RunConfig::from_json(read_json_file(config_path));
        if (!c.subcommand.empty() && c.subcommand != sub->get_name())
            fail(ErrorKind::Config, "config was written for '" + c.subcommand + "', not '" + sub->get_name() + "'");
        c.subcommand = sub->get_name();
        auto given = [&](const char* flag) { return sub->get_option_no_throw(flag) && sub->count(flag) > 0; };
        if (given("--problem")) c.problem = problem;
        if (given("--seed")) c.seed = seed;
        if (given("--out")) c.out = out;
        if (given("--threads")) c.threads = threads;
        if (given("--dataset")) c.dataset = dataset;
        if (given("--val-dataset")) c.val_dataset = val_dataset;
        if (given("--test-dataset")) c.test_dataset = test_dataset;
        if (given("--model")) c.model = model_dir;
        if (given("--variant")) c.variant = variant;
        if (given("--latent-dim")) c.latent_dim = latent_dim;
        if (given("--loss")) c.train["loss"] = loss;
        if (given("--epochs")) c.train["epochs"] = epochs;
        if (given("--lr")) c.train["learning_rate"] = lr;
        if (given("--batch")) c.train["batch_size"] = batch;
        if (given("--skip-steps")) c.skip_steps = skip;
        if (given("--samples")) c.samples = samples;
        if (given("--subsample")) c.subsample_mode = mode;
        if (given("--no-tau")) c.no_tau = no_tau;
        if (given("--grid")) c.grid = grid;
        if (given("--write-predictions")) c.write_predictions = write_predictions;
        if (given("--f32")) c.single_precision = f32;
        if (given("--kind")) c.study_kind = kind;
        if (given("--settings")) {
            c.study_settings.clear();
            for (double v : parse_list(settings_s, "--settings")) c.study_settings.push_back(static_cast<int>(v));
        }
        if (given("--x0")) c.x0 = parse_list(x0_s, "--x0");
        if (given("--params")) c.params = parse_list(params_s, "--params");
        if (given("--times")) c.times = parse_list(times_s, "--times");
        if (given("--sample")) c.sample = sample;

        if (c.subcommand == "gen") cmd_gen(c);
        else if (c.subcommand == "train") cmd_train(c);
        else if (c.subcommand == "eval") cmd_eval(c);
        else if (c.subcommand == "predict") cmd_predict(c);
        else if (c.subcommand == "bench") cmd_bench(c);
        else cmd_study(c);
    } catch (const Error& e) {
        exit_with(e.kind(), e.what());
    } catch (const json::exception& e) {
        exit_with(ErrorKind::Config, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        exit_with(ErrorKind::Io, e.what());
    } catch (const std::exception& e) {
        std::cerr << "error: category=internal code=1 message=" << e.what() << '\n';
        return 1;
    }
    return 0;
}
