// dampid: simulate, generate datasets, featurize, train, evaluate, predict, verify.

#include <dampid/dataset.hpp>
#include <dampid/experiments.hpp>
#include <dampid/features.hpp>
#include <dampid/nn/gradcheck.hpp>
#include <dampid/nn/serialize.hpp>
#include <dampid/sim.hpp>
#include <dampid/tensor_io.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace dampid;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kCheckFailed = 3 };

struct Globals {
    std::uint64_t master_seed = 0;
    std::size_t threads = 1;
    std::string workspace = "workspace";
    std::string config_path;
    bool deterministic = false;
    bool quiet = false;
    json config = json::object();
};

void info(const Globals& g, const std::string& msg) {
    if (!g.quiet) std::cerr << msg << '\n';
}

json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config '" + path + "'");
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw CorruptContainer("malformed config '" + path + "': " + e.what());
    }
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << text;
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    double zeta = 0.0;
    std::string input = "step:1";
    double seconds = 10.0;
    double fs = 1000.0;
    double omega_n = 1.0;
    double noise_sigma = 0.0;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string csv;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
    const auto input = sim::parse_input(a.input);
    sim::CanonicalParams plant{a.omega_n, a.zeta, 1.0};
    const auto seed = a.seed.value_or(dataset::trajectory_seed(g.master_seed, input, a.zeta));
    const auto tr = sim::make_trajectory(input, plant, a.seconds, a.fs, a.noise_sigma, seed);
    if (!a.out.empty()) {
        if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
        dataset::save_trajectory(a.out, tr);
    }
    if (!a.csv.empty()) {
        std::ostringstream os;
        os << "t,u,y\n";
        char buf[96];
        for (std::size_t i = 0; i < tr.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.6f,%.17g,%.17g\n", static_cast<double>(i) / a.fs, tr.u[i], tr.y[i]);
            os << buf;
        }
        write_file(a.csv, os.str());
    }
    std::cout << "samples=" << tr.size() << " input=" << sim::to_string(input) << " zeta=" << sim::detail::fmt_num(a.zeta)
              << " fs=" << sim::detail::fmt_num(a.fs) << " noise_sigma=" << sim::detail::fmt_num(a.noise_sigma)
              << " seed=" << seed << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// gen-dataset

struct GenArgs {
    bool extended = false;
    double noise_sigma = 0.01;
    std::string out;
};

int cmd_gen_dataset(const Globals& g, const GenArgs& a) {
    const auto dir = a.out.empty() ? fs::path(g.workspace) / "data" / (a.extended ? "extended" : "base") : fs::path(a.out);
    const auto ds =
        dataset::generate_dataset(a.extended, a.noise_sigma, derive_seed(g.master_seed, "dataset"));
    const auto m = dataset::write_dataset(ds, dir);
    const auto windows = m.trajectories.size() * dataset::window_count(ds.config.trajectory_len(), ds.config.window_len);
    std::cout << "manifest=" << (dir / "manifest.json").string() << " trajectories=" << m.trajectories.size()
              << " windows=" << windows << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// featurize

struct FeaturizeArgs {
    std::string manifest;
    std::size_t stride = 50;
    std::string out;
};

int cmd_featurize(const Globals& g, const FeaturizeArgs& a) {
    const auto ds = dataset::load_dataset(a.manifest);
    const auto windows = dataset::enumerate_windows(ds, a.stride);
    features::StftConfig cfg;
    const features::Featurizer featurizer(ds.config.window_len, cfg);
    info(g, "featurizing " + std::to_string(windows.size()) + " windows");
    const auto set = experiments::featurize_windows(ds, windows, featurizer, g.threads);
    const auto out = a.out.empty() ? fs::path(a.manifest).parent_path() / "features.dsid" : fs::path(a.out);
    io::Tensor t;
    t.shape = {set.size(), set.steps(), set.rows()};
    // Stored per window as steps x rows (row-major), i.e. one 168-vector per step.
    t.data.reserve(set.size() * set.rows() * set.steps());
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto s = set.sample(i);
        for (Eigen::Index c = 0; c < s.cols(); ++c)
            for (Eigen::Index r = 0; r < s.rows(); ++r) t.data.push_back(static_cast<double>(s(r, c)));
    }
    io::save_tensor(out, t, io::DType::Float32);
    json idx = {{"features", out.filename().string()},
                {"layout", "windows x steps x features"},
                {"stft", cfg},
                {"feature_blocks", {"real_u", "real_y", "phase_u", "phase_y"}},
                {"stride", a.stride},
                {"manifest", fs::absolute(a.manifest).lexically_normal().string()}};
    json wins = json::array();
    for (const auto& w : windows) wins.push_back({w.trajectory, w.start, ds.trajectories[w.trajectory].zeta});
    idx["windows"] = std::move(wins);
    auto idx_path = out;
    idx_path.replace_extension(".json");
    write_file(idx_path, idx.dump() + "\n");
    std::cout << "features=" << out.string() << " windows=" << set.size() << " shape=" << set.steps() << "x"
              << set.rows() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// train / evaluate

struct TrainArgs {
    std::string exp = "Exp6a";
    std::optional<std::size_t> stride;
    std::string manifest;
    std::optional<int> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> lr;
    std::optional<double> momentum;
    std::optional<double> noise_sigma;
    std::optional<std::string> normalize;
    bool retrain = false;
};

/// Resolves precedence: CLI flags > config file > built-in presets.
std::pair<experiments::ExperimentSpec, experiments::ExperimentOptions> resolve(const Globals& g, const TrainArgs& a) {
    auto spec = experiments::experiment_preset(a.exp);
    experiments::ExperimentOptions opt;
    opt.master_seed = g.master_seed;
    opt.threads = g.threads;
    opt.deterministic = g.deterministic;
    opt.reuse_models = !a.retrain;
    const auto& c = g.config;
    try {
        if (c.contains("train")) c.at("train").get_to(spec.train);
        opt.stride = c.value("stride", opt.stride);
        opt.noise_sigma = c.value("noise_sigma", opt.noise_sigma);
        if (c.contains("normalize")) opt.normalize = features::parse_normalize_mode(c.at("normalize").get<std::string>());
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    if (a.stride) opt.stride = *a.stride;
    if (a.noise_sigma) opt.noise_sigma = *a.noise_sigma;
    if (a.normalize) opt.normalize = features::parse_normalize_mode(*a.normalize);
    if (a.epochs) spec.train.epochs = *a.epochs;
    if (a.batch_size) spec.train.batch_size = *a.batch_size;
    if (a.lr) spec.train.initial_lr = *a.lr;
    if (a.momentum) spec.train.momentum = *a.momentum;
    spec.train.validate();
    opt.output_dir = fs::path(g.workspace) / spec.id;
    opt.model_dir = fs::path(g.workspace) / "models";
    return {spec, opt};
}

dataset::Dataset experiment_data(const experiments::ExperimentSpec& spec, const experiments::ExperimentOptions& opt,
                                 const std::string& manifest) {
    if (manifest.empty()) return experiments::experiment_dataset(spec.dataset, opt);
    auto ds = dataset::load_dataset(manifest);
    const auto want = spec.dataset == experiments::DatasetKind::Extended ? dataset::extended_inputs()
                                                                         : dataset::base_inputs();
    if (ds.config.inputs != want)
        throw SpecMismatch("manifest '" + manifest + "' does not hold the " + experiments::to_string(spec.dataset) +
                           " input catalog required by " + spec.id);
    return ds;
}

void print_report(const experiments::EvalReport& r) {
    for (const auto& f : r.folds)
        std::cout << r.id << " fold " << f.fold << ": train_mad=" << (std::isfinite(f.train_mad) ? num(f.train_mad) : "-")
                  << " test_mad=" << num(f.test_mad) << " test_windows=" << f.test_windows
                  << (f.loaded ? " (model reused)" : "") << '\n';
    std::cout << r.id << ": train_mad=" << (std::isfinite(r.train_mad) ? num(r.train_mad) : "-")
              << " test_mad=" << num(r.test_mad) << " config_hash=" << r.config_hash << '\n';
    for (const auto& h : r.histograms)
        std::cout << "  interval " << h.interval_label << " s (" << h.input_set << "): mad=" << num(h.weighted_mean())
                  << " windows=" << h.total() << '\n';
}

int cmd_train(const Globals& g, const TrainArgs& a) {
    auto [spec, opt] = resolve(g, a);
    const auto ds = experiment_data(spec, opt, a.manifest);
    const auto t0 = std::chrono::steady_clock::now();
    opt.log = [&](const std::string& m) { info(g, m); };
    opt.on_epoch = [&](int fold, const nn::EpochStats& st) {
        if (g.quiet) return;
        const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        char buf[160];
        std::snprintf(buf, sizeof buf, "  fold %d epoch %3d lr %.1e train_loss %.5f val_loss %.5f (%.0f s)", fold,
                      st.epoch, st.lr, st.train_loss, st.val_loss, el);
        std::cerr << buf << '\n';
    };
    const auto rep = experiments::run_experiment(spec, ds, opt);
    print_report(rep);
    std::cout << "report=" << (opt.output_dir / "report" / "summary.json").string() << '\n';
    return kOk;
}

struct EvaluateArgs {
    TrainArgs train;
    std::string model;
    std::string interval;
    std::string inputs = "all";
    bool step_generalization = false;
    std::string out;
};

int cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
    if (a.model.empty()) {
        // Experiment mode: evaluates (training first if needed) the persisted fold models.
        auto [spec, opt] = resolve(g, a.train);
        const auto ds = experiment_data(spec, opt, a.train.manifest);
        opt.log = [&](const std::string& m) { info(g, m); };
        if (!a.interval.empty()) spec.eval_interval = experiments::parse_interval(a.interval);
        if (a.inputs != "all") spec.eval_inputs = experiments::InputFilter::parse(a.inputs);
        if (!a.interval.empty() || a.inputs != "all") {
            spec.id += "_eval";
            opt.output_dir = fs::path(g.workspace) / spec.id;
        }
        print_report(experiments::run_experiment(spec, ds, opt));
        return kOk;
    }
    const auto model = experiments::Predictor::load(a.model);
    const auto filter = experiments::InputFilter::parse(a.inputs);
    const std::size_t stride = a.train.stride.value_or(50);
    const auto out_dir = a.out.empty() ? fs::path(g.workspace) / "eval" / fs::path(a.model).stem() : fs::path(a.out);
    if (a.step_generalization) {
        const auto sg = experiments::step_generalization_eval(model, a.train.noise_sigma.value_or(0.01),
                                                              g.master_seed, stride,
                                                              experiments::interval_presets(), g.threads);
        for (const auto& h : sg.histograms) {
            write_file(out_dir / ("hist_" + h.interval_label + "_" + h.input_set + ".csv"), h.to_csv());
            std::cout << "interval " << h.interval_label << " s: mad=" << num(h.weighted_mean()) << '\n';
        }
        std::cout << "unseen magnitudes:";
        for (std::size_t i = 0; i < sg.magnitudes.size(); ++i)
            if (sg.unseen[i]) std::cout << ' ' << sim::detail::fmt_num(sg.magnitudes[i]);
        std::cout << '\n';
        return kOk;
    }
    experiments::ExperimentOptions opt;
    opt.master_seed = g.master_seed;
    opt.noise_sigma = a.train.noise_sigma.value_or(0.01);
    const bool extended = model.weights.spec.input_size == features::kFeatureRows &&
                          model.metadata.contains("fingerprint") &&
                          model.metadata["fingerprint"].value("dataset", "base") == "extended";
    const auto ds = a.train.manifest.empty()
                        ? experiments::experiment_dataset(
                              extended ? experiments::DatasetKind::Extended : experiments::DatasetKind::Base, opt)
                        : dataset::load_dataset(a.train.manifest);
    std::vector<experiments::Interval> intervals;
    if (a.interval.empty())
        intervals = experiments::interval_presets();
    else
        intervals.push_back(experiments::parse_interval(a.interval));
    for (const auto& iv : intervals) {
        const auto h = experiments::error_histogram(model, ds, iv, filter, stride, g.threads);
        write_file(out_dir / ("hist_" + h.interval_label + "_" + h.input_set + ".csv"), h.to_csv());
        std::cout << "interval " << h.interval_label << " s (" << h.input_set << "): mad=" << num(h.weighted_mean())
                  << " windows=" << h.total() << '\n';
    }
    std::cout << "note: a fold model evaluated on every window includes its own training windows\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
    std::string model;
    std::string csv;
    std::string trajectory;
    double offset = 0.0;
    double fs = 1000.0;
};

int cmd_predict(const Globals&, const PredictArgs& a) {
    if (a.csv.empty() == a.trajectory.empty()) throw InvalidArgument("give exactly one of --csv or --trajectory");
    const auto model = experiments::Predictor::load(a.model);
    std::vector<double> u, y;
    double fs = a.fs;
    if (!a.trajectory.empty()) {
        const auto tr = dataset::load_trajectory_samples(a.trajectory);
        u = tr.u;
        y = tr.y;
    } else {
        std::ifstream is(a.csv);
        if (!is) throw IoError("cannot open '" + a.csv + "'");
        std::string line;
        if (!std::getline(is, line)) throw InvalidArgument("'" + a.csv + "' is empty");
        std::vector<double> t;
        std::size_t lineno = 1;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty()) continue;
            double tv = 0, uv = 0, yv = 0;
            if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &tv, &uv, &yv) != 3)
                throw InvalidArgument("'" + a.csv + "' line " + std::to_string(lineno) + " is not t,u,y");
            t.push_back(tv);
            u.push_back(uv);
            y.push_back(yv);
        }
        if (t.size() >= 2) {
            fs = static_cast<double>(t.size() - 1) / (t.back() - t.front());
            if (std::abs(fs - a.fs) > 1e-6 * a.fs)
                throw InvalidArgument("sample rate of '" + a.csv + "' is " + num(fs) + " Hz, the model expects " +
                                      num(a.fs) + " Hz");
        }
    }
    const auto start = static_cast<std::size_t>(std::llround(a.offset * fs));
    if (a.offset < 0.0 || start + model.window_len > u.size())
        throw InvalidArgument("sequence of " + std::to_string(u.size()) + " samples is too short for a " +
                              std::to_string(model.window_len) + "-sample window at offset " +
                              sim::detail::fmt_num(a.offset) + " s");
    const double z = model.predict(std::span<const double>(u).subspan(start, model.window_len),
                                   std::span<const double>(y).subspan(start, model.window_len));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", z);
    std::cout << "zeta_hat=" << buf << " model=" << model.model_id << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// gradcheck / debug-model

struct GradArgs {
    std::string cell = "bilstm";
    int trials = 20;
    double tolerance = 1e-4;
};

int cmd_gradcheck(const Globals& g, const GradArgs& a) {
    const auto kind = nn::parse_cell_kind(a.cell);
    double worst = 0.0;
    std::string where;
    for (int i = 0; i < a.trials; ++i) {
        const auto r = nn::gradient_check(kind, derive_seed(g.master_seed, "gradcheck/" + std::to_string(i)));
        if (r.max_rel_error > worst) {
            worst = r.max_rel_error;
            where = r.worst_param + "[" + std::to_string(r.worst_index) + "]";
        }
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", worst);
    const bool ok = worst < a.tolerance;
    std::cout << "cell=" << nn::to_string(kind) << " trials=" << a.trials << " max_rel_err=" << buf
              << " worst=" << where << (ok ? " PASS" : " FAIL") << '\n';
    return ok ? kOk : kCheckFailed;
}

struct DebugModelArgs {
    std::string cell = "bilstm";
    std::string out;
};

int cmd_debug_model(const Globals&, const DebugModelArgs& a) {
    nn::ModelSpec spec;
    spec.cell = nn::parse_cell_kind(a.cell);
    experiments::Predictor p;
    p.weights = nn::ModelWeights<float>::zeros(spec);
    p.model_id = "zero-" + nn::to_string(spec.cell);
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    p.save(a.out);
    std::cout << "model=" << a.out << " parameters=" << p.weights.parameter_count() << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Damping-factor identification from input/output sequences with recurrent networks"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--master-seed", g.master_seed, "Seed all randomness derives from");
    app.add_option("--threads", g.threads, "Worker threads for featurization")->check(CLI::PositiveNumber);
    app.add_option("--workspace", g.workspace, "Directory for datasets, models and reports");
    app.add_option("--config", g.config_path, "JSON file with train/stride/noise_sigma/normalize overrides")
        ->check(CLI::ExistingFile);
    app.add_flag("--deterministic", g.deterministic, "Omit timestamps from written reports");
    app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

    SimulateArgs sa;
    auto* sim_cmd = app.add_subcommand("simulate", "Simulate one trajectory");
    sim_cmd->add_option("--zeta", sa.zeta, "Damping factor, 0 < zeta < 1")->required();
    sim_cmd->add_option("--input", sa.input, "step:<m>, ramp:<slope> or sine:<amp>:<hz>");
    sim_cmd->add_option("--seconds", sa.seconds, "Duration");
    sim_cmd->add_option("--fs", sa.fs, "Sample rate in Hz");
    sim_cmd->add_option("--omega-n", sa.omega_n, "Natural frequency in rad/s");
    sim_cmd->add_option("--noise-sigma", sa.noise_sigma, "Output noise standard deviation");
    sim_cmd->add_option("--seed", sa.seed, "Noise seed (default: derived from the master seed)");
    sim_cmd->add_option("--out", sa.out, "Trajectory file (.dsid)");
    sim_cmd->add_option("--csv", sa.csv, "Also write t,u,y CSV");

    GenArgs ga;
    auto* gen_cmd = app.add_subcommand("gen-dataset", "Generate the base or extended dataset");
    gen_cmd->add_flag("--extended", ga.extended, "Add step inputs -1, +10, -10");
    gen_cmd->add_option("--noise-sigma", ga.noise_sigma, "Output noise standard deviation");
    gen_cmd->add_option("--out", ga.out, "Output directory (default <workspace>/data/<base|extended>)");

    FeaturizeArgs fa;
    auto* feat_cmd = app.add_subcommand("featurize", "Compute STFT features of dataset windows");
    feat_cmd->add_option("--manifest", fa.manifest, "Dataset manifest.json")->required()->check(CLI::ExistingFile);
    feat_cmd->add_option("--stride", fa.stride, "Window stride in samples")->check(CLI::PositiveNumber);
    feat_cmd->add_option("--out", fa.out, "Feature tensor file (default next to the manifest)");

    TrainArgs ta;
    auto add_train_options = [](CLI::App* cmd, TrainArgs& t) {
        cmd->add_option("--exp", t.exp, "Experiment id: Exp1..Exp5, Exp6a, Exp6b, Exp7");
        cmd->add_option("--stride", t.stride, "Window stride in samples (1 = full scale)")->check(CLI::PositiveNumber);
        cmd->add_option("--manifest", t.manifest, "Use this dataset instead of generating it")
            ->check(CLI::ExistingFile);
        cmd->add_option("--epochs", t.epochs, "Override epochs");
        cmd->add_option("--batch-size", t.batch_size, "Override mini-batch size");
        cmd->add_option("--lr", t.lr, "Override initial learning rate");
        cmd->add_option("--momentum", t.momentum, "Override momentum");
        cmd->add_option("--noise-sigma", t.noise_sigma, "Dataset noise standard deviation");
        cmd->add_option("--normalize", t.normalize, "none, per_row or per_block");
        cmd->add_flag("--retrain", t.retrain, "Ignore persisted fold models");
    };
    auto* train_cmd = app.add_subcommand("train", "Run an experiment: two folds, train and evaluate");
    add_train_options(train_cmd, ta);

    EvaluateArgs ea;
    auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate an experiment's models or one model file");
    add_train_options(eval_cmd, ea.train);
    eval_cmd->add_option("--model", ea.model, "Model file (.dsiw); evaluates on the whole dataset")
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--interval", ea.interval, "Restrict to windows inside a-b seconds");
    eval_cmd->add_option("--inputs", ea.inputs, "Comma-separated input kinds or labels, or 'all'");
    eval_cmd->add_flag("--step-generalization", ea.step_generalization,
                       "With --model: steps of magnitude +-1, +-2, +-5, +-10");
    eval_cmd->add_option("--out", ea.out, "Histogram directory (with --model)");

    PredictArgs pa;
    auto* pred_cmd = app.add_subcommand("predict", "Predict zeta for one window of an I/O pair");
    pred_cmd->add_option("--model", pa.model, "Model file (.dsiw)")->required()->check(CLI::ExistingFile);
    pred_cmd->add_option("--csv", pa.csv, "CSV with header t,u,y")->check(CLI::ExistingFile);
    pred_cmd->add_option("--trajectory", pa.trajectory, "Trajectory file (.dsid)")->check(CLI::ExistingFile);
    pred_cmd->add_option("--offset", pa.offset, "Window start in seconds");
    pred_cmd->add_option("--fs", pa.fs, "Expected sample rate in Hz");

    GradArgs gra;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of backpropagation");
    grad_cmd->add_option("--cell", gra.cell, "gru, lstm or bilstm");
    grad_cmd->add_option("--trials", gra.trials, "Random models to check")->check(CLI::PositiveNumber);
    grad_cmd->add_option("--tolerance", gra.tolerance, "Maximum relative error");

    DebugModelArgs da;
    auto* dbg_cmd = app.add_subcommand("debug-model", "Write a zero-weight model for plumbing tests");
    dbg_cmd->add_option("--cell", da.cell, "gru, lstm or bilstm");
    dbg_cmd->add_option("--out", da.out, "Model file (.dsiw)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (!g.config_path.empty()) g.config = read_json_file(g.config_path);
        if (sim_cmd->parsed()) return cmd_simulate(g, sa);
        if (gen_cmd->parsed()) return cmd_gen_dataset(g, ga);
        if (feat_cmd->parsed()) return cmd_featurize(g, fa);
        if (train_cmd->parsed()) return cmd_train(g, ta);
        if (eval_cmd->parsed()) return cmd_evaluate(g, ea);
        if (pred_cmd->parsed()) return cmd_predict(g, pa);
        if (grad_cmd->parsed()) return cmd_gradcheck(g, gra);
        if (dbg_cmd->parsed()) return cmd_debug_model(g, da);
    } catch (const sim::OverdampedExcluded& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}
