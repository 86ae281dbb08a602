// tokenlab CLI: every experiment and utility as a subcommand.
//
//   tokenlab <subcommand> [--config PATH] [--key VALUE]...
//
// Config files are flat key=value lines; CLI overrides win. Every run writes
// <name>.resolved.cfg (exact configuration used) and <name>.meta.json
// (timestamp + argv, kept separate so report files are byte-reproducible).
// Exit codes: 0 pass, 1 usage/config/runtime error, 2 experiment ran but
// failed its acceptance checks. Stdout is always a one-line JSON summary.

#include <cstdlib>
#include <cstring>
#include <ctime>
#include <iostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tokenlab/errors.hpp"
#include "tokenlab/experiments.hpp"
#include "tokenlab/info.hpp"
#include "tokenlab/io_util.hpp"
#include "tokenlab/objectives.hpp"
#include "tokenlab/predictors.hpp"
#include "tokenlab/report.hpp"
#include "tokenlab/resampler.hpp"
#include "tokenlab/rng.hpp"
#include "tokenlab/run_config.hpp"
#include "tokenlab/seg_metrics.hpp"
#include "tokenlab/token_core.hpp"

using namespace tokenlab;
using nlohmann::ordered_json;

namespace {

struct CliArgs {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
};

CliArgs parse_cli(const std::vector<std::string>& args) {
    CliArgs out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& arg = args[i];
        if (arg.rfind("--", 0) != 0 || arg.size() <= 2)
            throw Error(ErrorCode::config_error, "expected --key VALUE, got '" + arg + "'");
        const std::string key = arg.substr(2);
        if (i + 1 >= args.size())
            throw Error(ErrorCode::config_error, "missing value for --" + key);
        const std::string& value = args[++i];
        if (key == "config")
            out.config_path = value;
        else
            out.overrides.emplace_back(key, value);
    }
    return out;
}

// `--config default` (or no --config) keeps the built-in defaults.
void apply_cli(RunConfig& cfg, const CliArgs& cli) {
    if (!cli.config_path.empty() && cli.config_path != "default")
        cfg.load_file(cli.config_path);
    for (const auto& [key, value] : cli.overrides) cfg.set(key, value);
}

std::string default_out_dir() {
    const char* env = std::getenv("TU_OUT_DIR");
    return (env != nullptr && *env != '\0') ? env : ".";
}

void declare_common(RunConfig& cfg, const std::string& name) {
    cfg.declare("out_dir", default_out_dir());
    cfg.declare("name", name);
    cfg.declare("seed", "0");
    cfg.declare("workers", "1");
}

std::string iso_timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void write_run_files(const RunConfig& cfg, const std::string& sub,
                     const std::vector<std::string>& raw_args) {
    const std::string out_dir = cfg.get_str("out_dir");
    const std::string name = cfg.get_str("name");
    write_file_atomic(out_dir + "/" + name + ".resolved.cfg", cfg.resolved_text());
    ordered_json meta;
    meta["subcommand"] = sub;
    meta["timestamp_utc"] = iso_timestamp_utc();
    meta["argv"] = raw_args;
    write_file_atomic(out_dir + "/" + name + ".meta.json", meta.dump(2) + "\n");
}

int finish_report(ExperimentReport& report, const RunConfig& cfg, const std::string& sub,
                  const std::vector<std::string>& raw_args, ordered_json extra = {}) {
    const std::string out_dir = cfg.get_str("out_dir");
    const std::string name = cfg.get_str("name");
    report.write(out_dir, name);
    write_run_files(cfg, sub, raw_args);

    ordered_json summary;
    summary["experiment"] = report.experiment;
    summary["pass"] = report.pass;
    if (!report.failures.empty()) summary["first_failure"] = report.failures.front();
    if (!report.slopes.empty()) summary["slopes"] = report.slopes;
    for (auto& [key, value] : extra.items()) summary[key] = value;
    summary["report"] = out_dir + "/" + name + ".json";
    std::cout << summary.dump() << "\n";
    return report.pass ? 0 : 2;
}

std::uint32_t to_u32(std::uint64_t v, const char* what) {
    if (v > 0xffffffffULL)
        throw Error(ErrorCode::config_error, std::string(what) + " out of range");
    return static_cast<std::uint32_t>(v);
}

// ---------------------------------------------------------------------------
// pretrain

// V-state sticky chain: stay with probability `stick`, otherwise uniform
// over the other symbols. Its stationary distribution is uniform.
std::vector<std::vector<double>> sticky_transition(std::uint32_t v, double stick) {
    std::vector<std::vector<double>> rows(v, std::vector<double>(v));
    for (std::uint32_t a = 0; a < v; ++a)
        for (std::uint32_t b = 0; b < v; ++b)
            rows[a][b] = (a == b) ? stick : (1.0 - stick) / static_cast<double>(v - 1);
    return rows;
}

int cmd_pretrain(RunConfig& cfg, const CliArgs& cli, const std::vector<std::string>& raw_args) {
    declare_common(cfg, "pretrain");
    cfg.declare("corpus", "synthetic");
    cfg.declare("synth_sequences", "2048");
    cfg.declare("synth_k", "64");
    cfg.declare("synth_vocab", "2");
    cfg.declare("synth_stick", "0.9");
    cfg.declare("model", "tabular"); // tabular | linear
    cfg.declare("embed_dim", "8");
    cfg.declare("mode", "curriculum"); // curriculum | alternating
    cfg.declare("iters", "5000");
    cfg.declare("lr", "0.002");
    cfg.declare("lr_decay", "false"); // inverse-sqrt decay
    cfg.declare("batch_size", "16");
    cfg.declare("mask_ratio", "0.5");
    cfg.declare("path", "raster"); // raster | shuffle
    cfg.declare("temperature", "1.0");
    cfg.declare("warmup_frac", "0.1");
    cfg.declare("transition_period", "0"); // 0 means iters
    cfg.declare("p_next_all", "0.1");
    cfg.declare("next_all_subsample", "1.0");
    cfg.declare("check_tol", "0.05");
    cfg.declare("write_checkpoint", "true");
    apply_cli(cfg, cli);

    const std::uint64_t seed = cfg.get_u64("seed");
    const std::string corpus_spec = cfg.get_str("corpus");

    std::vector<TokenSequence> corpus;
    bool synthetic = corpus_spec == "synthetic";
    std::vector<std::vector<double>> transition;
    std::vector<double> marginal;
    if (synthetic) {
        const std::uint32_t v = to_u32(cfg.get_u64("synth_vocab"), "synth_vocab");
        const std::uint32_t k = to_u32(cfg.get_u64("synth_k"), "synth_k");
        const std::uint64_t count = cfg.get_u64("synth_sequences");
        const double stick = cfg.get_real("synth_stick");
        if (v < 2) throw Error(ErrorCode::config_error, "synth_vocab must be >= 2");
        if (stick <= 0.0 || stick >= 1.0)
            throw Error(ErrorCode::config_error, "synth_stick must be in (0,1)");
        transition = sticky_transition(v, stick);
        marginal.assign(v, 1.0 / static_cast<double>(v));
        corpus.reserve(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            Rng seq_rng = derive_rng(seed, 100000 + i);
            TokenSequence seq = sample_markov_sequence(marginal, transition, k, seq_rng);
            seq.id = "synth-" + std::to_string(i);
            corpus.push_back(std::move(seq));
        }
    } else {
        corpus = load_corpus(corpus_spec);
    }
    if (corpus.empty()) throw Error(ErrorCode::empty_input, "pretraining corpus is empty");
    const std::uint32_t vocab = corpus.front().vocab_size;
    for (const TokenSequence& seq : corpus)
        if (seq.vocab_size != vocab)
            throw Error(ErrorCode::vocab_violation,
                        "corpus mixes vocab sizes (sequence " + seq.id + ")");

    std::unique_ptr<PredictorModel> model;
    const std::string model_kind = cfg.get_str("model");
    if (model_kind == "tabular") {
        model = std::make_unique<TabularPredictor>(vocab);
    } else if (model_kind == "linear") {
        model = std::make_unique<LinearSoftmaxPredictor>(
            vocab, to_u32(cfg.get_u64("embed_dim"), "embed_dim"), mix_u64(seed ^ 0x11d3));
    } else {
        throw Error(ErrorCode::config_error, "model must be tabular or linear");
    }

    OptimizerConfig opt;
    opt.iters = cfg.get_int("iters");
    opt.learning_rate = cfg.get_real("lr");
    opt.inv_sqrt_decay = cfg.get_bool("lr_decay");
    opt.batch_size = cfg.get_int("batch_size");
    opt.mask_ratio = cfg.get_real("mask_ratio");
    opt.warmup_frac = cfg.get_real("warmup_frac");
    opt.next_all_subsample = cfg.get_real("next_all_subsample");
    const std::string path_kind = cfg.get_str("path");
    if (path_kind == "raster")
        opt.path_kind = PathKind::raster;
    else if (path_kind == "shuffle")
        opt.path_kind = PathKind::seeded_permutation;
    else
        throw Error(ErrorCode::config_error, "path must be raster or shuffle");

    ScheduleConfig schedule;
    const std::string mode = cfg.get_str("mode");
    if (mode == "curriculum") {
        CurriculumConfig cur;
        cur.total_iters = opt.iters;
        cur.temperature = cfg.get_real("temperature");
        schedule = cur;
    } else if (mode == "alternating") {
        AlternatingConfig alt;
        const double period = cfg.get_real("transition_period");
        alt.transition_period = period > 0.0 ? period : static_cast<double>(opt.iters);
        alt.p_next_all = cfg.get_real("p_next_all");
        schedule = alt;
    } else {
        throw Error(ErrorCode::config_error, "mode must be curriculum or alternating");
    }

    Rng train_rng = derive_rng(seed, 2);
    const TrainLog log = pretrain(corpus, *model, schedule, opt, train_rng);

    // Deterministic final evaluation: mean per-token loss_next over the whole
    // corpus in natural (raster) order.
    Rng eval_rng = derive_rng(seed, 3);
    double next_per_token = 0.0;
    for (const TokenSequence& seq : corpus) {
        const Path path = make_path(static_cast<std::uint32_t>(seq.tokens.size()),
                                    PathKind::raster, eval_rng);
        next_per_token += loss_next(*model, seq, path) / static_cast<double>(seq.tokens.size());
    }
    next_per_token /= static_cast<double>(corpus.size());

    ExperimentReport report;
    report.experiment = "pretrain";
    report.config = cfg.to_json();
    report.measured["final_loss_next_per_token"] = next_per_token;
    if (!log.rows.empty()) {
        const TrainLogRow& last = log.rows.back();
        report.measured["last_logged_loss_random"] = last.loss_random;
        report.measured["last_logged_loss_next"] = last.loss_next;
        report.measured["last_logged_loss_next_all"] = last.loss_next_all;
    }

    const double tol = cfg.get_real("check_tol");
    if (synthetic) {
        // Per-token conditional entropy of the generator: the first position
        // contributes H(marginal), every later one the chain's entropy rate.
        const double rate = markov_entropy_rate(transition, stationary_distribution(transition));
        const double h0 = entropy(marginal);
        const double k = static_cast<double>(corpus.front().tokens.size());
        const double reference = (h0 + (k - 1.0) * rate) / k;
        const double gap = std::abs(next_per_token - reference) / reference;
        report.measured["reference_per_token"] = reference;
        report.measured["entropy_rate"] = rate;
        report.measured["rel_gap"] = gap;
        report.bounds["tolerance"] = tol;
        if (gap > tol) report.fail("loss_next_gap");
    }

    const std::string out_dir = cfg.get_str("out_dir");
    const std::string name = cfg.get_str("name");
    write_file_atomic(out_dir + "/" + name + "_trainlog.csv", log.to_csv());
    if (cfg.get_bool("write_checkpoint"))
        save_checkpoint(*model, out_dir + "/" + name + ".ckpt");

    ordered_json extra;
    extra["final_loss_next_per_token"] = next_per_token;
    extra["trainlog"] = out_dir + "/" + name + "_trainlog.csv";
    return finish_report(report, cfg, "pretrain", raw_args, extra);
}

// ---------------------------------------------------------------------------
// schedule

int cmd_schedule(RunConfig& cfg, const CliArgs& cli, const std::vector<std::string>& raw_args) {
    declare_common(cfg, "schedule");
    cfg.declare("mode", "curriculum"); // curriculum | alternating
    cfg.declare("t", "-1");            // report weights at this step (-1: curve only)
    cfg.declare("total_iters", "10000");
    cfg.declare("temperature", "1.0");
    cfg.declare("t1_frac", "0.3");
    cfg.declare("t2_frac", "0.7");
    cfg.declare("transition_period", "0"); // 0 means total_iters
    cfg.declare("p_next_all", "0.1");
    apply_cli(cfg, cli);

    const std::int64_t total = cfg.get_int("total_iters");
    const std::int64_t at = cfg.get_int("t");
    const std::string mode = cfg.get_str("mode");

    ExperimentReport report;
    report.experiment = "schedule";
    report.config = cfg.to_json();
    ordered_json extra;

    if (mode == "curriculum") {
        CurriculumConfig cur;
        cur.total_iters = total;
        cur.temperature = cfg.get_real("temperature");
        cur.t1_frac = cfg.get_real("t1_frac");
        cur.t2_frac = cfg.get_real("t2_frac");
        cur.validate();
        report.csv_header = {"t", "alpha", "beta", "gamma"};
        for (std::int64_t t = 0; t < total; ++t) {
            const ModulationState w = schedule_weights(t, cur);
            report.csv_rows.push_back({static_cast<double>(t), w.alpha, w.beta, w.gamma});
            if (std::abs(w.alpha + w.beta + w.gamma - 1.0) > 1e-12) report.fail("weights_sum");
        }
        if (at >= 0) {
            const ModulationState w = schedule_weights(at, cur);
            extra["alpha"] = w.alpha;
            extra["beta"] = w.beta;
            extra["gamma"] = w.gamma;
            report.measured["alpha"] = w.alpha;
            report.measured["beta"] = w.beta;
            report.measured["gamma"] = w.gamma;
        }
    } else if (mode == "alternating") {
        AlternatingConfig alt;
        const double period = cfg.get_real("transition_period");
        alt.transition_period = period > 0.0 ? period : static_cast<double>(total);
        alt.p_next_all = cfg.get_real("p_next_all");
        alt.validate();
        report.csv_header = {"t", "p_mask", "p_ar", "p_next_all"};
        for (std::int64_t t = 0; t < total; ++t) {
            const ModeDistribution d = alternating_distribution(t, alt);
            report.csv_rows.push_back({static_cast<double>(t), d.p_mask, d.p_ar, d.p_next_all});
            if (std::abs(d.p_mask + d.p_ar + d.p_next_all - 1.0) > 1e-12) report.fail("mode_sum");
        }
        if (at >= 0) {
            const ModeDistribution d = alternating_distribution(at, alt);
            extra["p_mask"] = d.p_mask;
            extra["p_ar"] = d.p_ar;
            extra["p_next_all"] = d.p_next_all;
            report.measured["p_mask"] = d.p_mask;
            report.measured["p_ar"] = d.p_ar;
            report.measured["p_next_all"] = d.p_next_all;
        }
    } else {
        throw Error(ErrorCode::config_error, "mode must be curriculum or alternating");
    }
    return finish_report(report, cfg, "schedule", raw_args, extra);
}

// ---------------------------------------------------------------------------
// theory experiments

int cmd_err_accum(RunConfig& cfg, const CliArgs& cli, const std::vector<std::string>& raw_args) {
    declare_common(cfg, "err_accum");
    cfg.declare("k_grid", "4,16,64,256,1024");
    cfg.declare("sigma2", "1.0");
    cfg.declare("variance_mode", "constant"); // constant | decaying
    cfg.declare("member_sampling", "exact_law"); // literal | exact_law
    cfg.declare("trials", "10000");
    apply_cli(cfg, cli);

    ErrorAccumConfig ecfg;
    ecfg.k_grid = cfg.get_u64_list("k_grid");
    ecfg.sigma2 = cfg.get_real("sigma2");
    ecfg.trials = cfg.get_int("trials");
    ecfg.seed = cfg.get_u64("seed");
    ecfg.workers = static_cast<int>(cfg.get_int("workers"));
    const std::string mode = cfg.get_str("variance_mode");
    if (mode == "constant")
        ecfg.variance_mode = VarianceMode::constant;
    else if (mode == "decaying")
        ecfg.variance_mode = VarianceMode::decaying;
    else
        throw Error(ErrorCode::config_error, "variance_mode must be constant or decaying");
    const std::string sampling = cfg.get_str("member_sampling");
    if (sampling == "literal")
        ecfg.member_sampling = MemberSampling::literal;
    else if (sampling == "exact_law")
        ecfg.member_sampling = MemberSampling::exact_law;
    else
        throw Error(ErrorCode::config_error, "member_sampling must be literal or exact_law");

    ExperimentReport report = error_accumulation_experiment(ecfg);
    return finish_report(report, cfg, "err-accum", raw_args);
}

int cmd_ar_conv(RunConfig& cfg, const CliArgs& cli, const std::vector<std::string>& raw_args) {
    declare_common(cfg, "ar_conv");
    cfg.declare("c", "0.5");
    cfg.declare("r", "0.5");
    cfg.declare("sigma2", "1.0");
    cfg.declare("p_grid", "1,2,4,8,16");
    cfg.declare("t", "100000");
    cfg.declare("holdout", "20000");
    cfg.declare("burnin", "500");
    apply_cli(cfg, cli);

    ArConvergenceConfig acfg;
    acfg.c = cfg.get_real("c");
    acfg.r = cfg.get_real("r");
    acfg.sigma2 = cfg.get_real("sigma2");
    acfg.p_grid.clear();
    for (std::uint64_t p : cfg.get_u64_list("p_grid")) acfg.p_grid.push_back(to_u32(p, "p_grid"));
    acfg.t = cfg.get_u64("t");
    acfg.holdout = cfg.get_u64("holdout");
    acfg.burnin = cfg.get_u64("burnin");
    acfg.seed = cfg.get_u64("seed");

    ExperimentReport report = ar_convergence_experiment(acfg);
    return finish_report(report, cfg, "ar-conv", raw_args);
}

int cmd_lad_scaling(RunConfig& cfg, const CliArgs& cli, const std::vector<std::string>& raw_args) {
    declare_common(cfg, "lad_scaling");
    cfg.declare("n_grid", "200,400,800,1600,3200");
    cfg.declare("p", "256");
    cfg.declare("s", "4");
    cfg.declare("sigma", "1.0");
    cfg.declare("c0", "1.0");
    cfg.declare("signal_magnitude", "1.0");
    cfg.declare("trials", "20");
    apply_cli(cfg, cli);

    LadLassoConfig lcfg;
    lcfg.n_grid = cfg.get_u64_list("n_grid");
    lcfg.p = to_u32(cfg.get_u64("p"), "p");
    lcfg.s = to_u32(cfg.get_u64("s"), "s");
    lcfg.sigma = cfg.get_real("sigma");
    lcfg.c0 = cfg.get_real("c0");
    lcfg.signal_magnitude = cfg.get_real("signal_magnitude");
    lcfg.trials = cfg.get_int("trials");
    lcfg.seed = cfg.get_u64("seed");
    lcfg.workers = static_cast<int>(cfg.get_int("workers"));

    ExperimentReport report = lad_scaling_experiment(lcfg);
    return finish_report(report, cfg, "lad-scaling", raw_args);
}

int cmd_altopt_conv(RunConfig& cfg, const CliArgs& cli, const std::vector<std::string>& raw_args) {
    declare_common(cfg, "altopt_conv");
    cfg.declare("t_grid", "100,1000,10000");
    cfg.declare("dim", "8");
    cfg.declare("eig_min", "0.1");
    cfg.declare("eig_max", "10.0");
    cfg.declare("sin_amp", "0.5");
    cfg.declare("sin_freq", "2.0");
    cfg.declare("sigma_mode", "1.0");
    cfg.declare("eta0", "0"); // 0 means 1/L
    cfg.declare("theta0_range", "2.0");
    cfg.declare("trials", "50");
    apply_cli(cfg, cli);

    AltOptConfig acfg;
    acfg.t_grid = cfg.get_u64_list("t_grid");
    acfg.dim = to_u32(cfg.get_u64("dim"), "dim");
    acfg.eig_min = cfg.get_real("eig_min");
    acfg.eig_max = cfg.get_real("eig_max");
    acfg.sin_amp = cfg.get_real("sin_amp");
    acfg.sin_freq = cfg.get_real("sin_freq");
    acfg.sigma_mode = cfg.get_real("sigma_mode");
    acfg.eta0 = cfg.get_real("eta0");
    acfg.theta0_range = cfg.get_real("theta0_range");
    acfg.trials = cfg.get_int("trials");
    acfg.seed = cfg.get_u64("seed");
    acfg.workers = static_cast<int>(cfg.get_int("workers"));

    ExperimentReport report = altopt_convergence_experiment(acfg);
    return finish_report(report, cfg, "altopt-conv", raw_args);
}

// ---------------------------------------------------------------------------
// mi-check

int cmd_mi_check(RunConfig& cfg, const CliArgs& cli, const std::vector<std::string>& raw_args) {
    declare_common(cfg, "mi_check");
    cfg.declare("generators", "100");
    cfg.declare("k_max", "6");
    cfg.declare("v_max", "3");
    cfg.declare("rho", "0.5");
    cfg.declare("alpha", "1.0");
    cfg.declare("beta", "1.0");
    cfg.declare("gamma", "1.0");
    cfg.declare("chain_rule_tol", "1e-10");
    apply_cli(cfg, cli);

    const std::uint64_t generators = cfg.get_u64("generators");
    const std::uint32_t k_max = to_u32(cfg.get_u64("k_max"), "k_max");
    const std::uint32_t v_max = to_u32(cfg.get_u64("v_max"), "v_max");
    const double rho = cfg.get_real("rho");
    const double alpha = cfg.get_real("alpha");
    const double beta = cfg.get_real("beta");
    const double gamma = cfg.get_real("gamma");
    const double chain_tol = cfg.get_real("chain_rule_tol");
    const std::uint64_t seed = cfg.get_u64("seed");
    if (k_max < 2 || v_max < 2)
        throw Error(ErrorCode::config_error, "k_max and v_max must be >= 2");

    ExperimentReport report;
    report.experiment = "mi_check";
    report.config = cfg.to_json();

    // Fixed oracles first: fully independent tokens and the copy chain.
    {
        const ComplementarityResult iid =
            complementarity_check(make_iid_uniform(4, 3), rho, alpha, beta, gamma);
        report.measured["iid_i_total"] = iid.i_total;
        if (std::abs(iid.i_total) > 1e-12 || std::abs(iid.term_random) > 1e-12)
            report.fail("iid_zero");

        const SequenceDistribution copy = make_copy_chain(3);
        const ComplementarityResult cc = complementarity_check(copy, rho, alpha, beta, gamma);
        report.measured["copy_term_next"] = cc.term_next;
        const double block = mutual_information_sets(copy, {1, 2}, {0});
        report.measured["copy_block_mi"] = block;
        const double ln2 = std::log(2.0);
        if (std::abs(cc.term_next - 2.0 * ln2) > 1e-12) report.fail("copy_chain_next");
        if (std::abs(block - ln2) > 1e-12) report.fail("copy_chain_block");
    }

    double worst_margin = std::numeric_limits<double>::infinity();
    double worst_chain = 0.0;
    report.csv_header = {"generator", "k", "v", "term_random", "term_next", "term_next_all",
                         "i_total_unit", "dominance_margin", "chain_rule_dev"};
    for (std::uint64_t g = 0; g < generators; ++g) {
        Rng rng = derive_rng(seed, g);
        const std::uint32_t k = 2 + static_cast<std::uint32_t>(rng.below(k_max - 1));
        const std::uint32_t v = 2 + static_cast<std::uint32_t>(rng.below(v_max - 1));
        const SequenceDistribution dist = make_random_distribution(k, v, rng);
        const ComplementarityResult res = complementarity_check(dist, rho, alpha, beta, gamma);
        worst_margin = std::min(worst_margin, res.dominance_margin);
        worst_chain = std::max(worst_chain, res.max_chain_rule_dev);
        report.csv_rows.push_back({static_cast<double>(g), static_cast<double>(k),
                                   static_cast<double>(v), res.term_random, res.term_next,
                                   res.term_next_all, res.i_total_unit, res.dominance_margin,
                                   res.max_chain_rule_dev});
    }
    report.measured["worst_dominance_margin"] = worst_margin;
    report.measured["worst_chain_rule_dev"] = worst_chain;
    report.bounds["chain_rule_tol"] = chain_tol;
    if (worst_margin < 0.0) report.fail("dominance");
    if (worst_chain > chain_tol) report.fail("chain_rule");

    return finish_report(report, cfg, "mi-check", raw_args);
}

// ---------------------------------------------------------------------------
// metrics

int cmd_metrics(RunConfig& cfg, const CliArgs& cli, const std::vector<std::string>& raw_args) {
    declare_common(cfg, "metrics");
    cfg.declare("pred", "");
    cfg.declare("gt", "");
    cfg.declare("base2", "false");
    apply_cli(cfg, cli);

    const std::string pred_path = cfg.get_str("pred");
    const std::string gt_path = cfg.get_str("gt");
    if (pred_path.empty() || gt_path.empty())
        throw Error(ErrorCode::config_error, "metrics requires --pred and --gt");

    const LabelVolume pred = load_label_volume(pred_path);
    const LabelVolume gt = load_label_volume(gt_path);
    VoiResult v = voi(pred, gt);
    const double ar = arand(pred, gt);
    if (cfg.get_bool("base2")) {
        const double ln2 = std::log(2.0);
        v.split /= ln2;
        v.merge /= ln2;
        v.total /= ln2;
    }

    ordered_json result;
    result["voi_split"] = v.split;
    result["voi_merge"] = v.merge;
    result["voi"] = v.total;
    result["arand"] = ar;

    const std::string out_dir = cfg.get_str("out_dir");
    const std::string name = cfg.get_str("name");
    write_file_atomic(out_dir + "/" + name + ".json", result.dump(2) + "\n");
    write_run_files(cfg, "metrics", raw_args);

    ordered_json summary = result;
    summary["pass"] = true;
    std::cout << summary.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// resampler-check

int cmd_resampler_check(RunConfig& cfg, const CliArgs& cli,
                        const std::vector<std::string>& raw_args) {
    declare_common(cfg, "resampler_check");
    cfg.declare("latents", "8");
    cfg.declare("dim", "16");
    cfg.declare("layers", "2");
    cfg.declare("ffw_hidden", "32");
    cfg.declare("t_steps", "3");
    cfg.declare("s_tokens", "5");
    cfg.declare("tol", "1e-9");
    apply_cli(cfg, cli);

    ResamplerConfig rcfg;
    rcfg.num_latents = to_u32(cfg.get_u64("latents"), "latents");
    rcfg.dim = to_u32(cfg.get_u64("dim"), "dim");
    rcfg.num_layers = to_u32(cfg.get_u64("layers"), "layers");
    rcfg.ffw_hidden = to_u32(cfg.get_u64("ffw_hidden"), "ffw_hidden");
    rcfg.seed = cfg.get_u64("seed");
    rcfg.validate();
    const std::uint32_t t_steps = to_u32(cfg.get_u64("t_steps"), "t_steps");
    const std::uint32_t s_tokens = to_u32(cfg.get_u64("s_tokens"), "s_tokens");
    const double tol = cfg.get_real("tol");
    const std::uint64_t seed = cfg.get_u64("seed");

    Rng rng = derive_rng(seed, 11);
    const Eigen::Index rows = static_cast<Eigen::Index>(t_steps) * s_tokens;
    Eigen::MatrixXd features(rows, rcfg.dim), time_emb(t_steps, rcfg.dim),
        latents(rcfg.num_latents, rcfg.dim);
    for (Eigen::Index i = 0; i < features.rows(); ++i)
        for (Eigen::Index j = 0; j < features.cols(); ++j) features(i, j) = 0.5 * rng.gaussian();
    for (Eigen::Index i = 0; i < time_emb.rows(); ++i)
        for (Eigen::Index j = 0; j < time_emb.cols(); ++j) time_emb(i, j) = 0.5 * rng.gaussian();
    for (Eigen::Index i = 0; i < latents.rows(); ++i)
        for (Eigen::Index j = 0; j < latents.cols(); ++j) latents(i, j) = 0.5 * rng.gaussian();

    ExperimentReport report;
    report.experiment = "resampler_check";
    report.config = cfg.to_json();

    PerceiverResampler resampler(rcfg);
    const Eigen::MatrixXd base = resampler.forward(features, t_steps, s_tokens, time_emb, latents);

    { // no layers: output must equal the latent queries bit-for-bit
        ResamplerConfig zero_cfg = rcfg;
        zero_cfg.num_layers = 0;
        PerceiverResampler identity(zero_cfg);
        const double dev =
            (identity.forward(features, t_steps, s_tokens, time_emb, latents) - latents)
                .cwiseAbs()
                .maxCoeff();
        report.measured["zero_layer_dev"] = dev;
        if (dev != 0.0) report.fail("zero_layer_identity");
    }

    { // attention is a set operation over kv rows: shuffle tokens within steps
        Eigen::MatrixXd shuffled = features;
        for (std::uint32_t t = 0; t < t_steps; ++t) {
            std::vector<std::uint32_t> perm(s_tokens);
            for (std::uint32_t s = 0; s < s_tokens; ++s) perm[s] = s;
            rng.shuffle(perm);
            for (std::uint32_t s = 0; s < s_tokens; ++s)
                shuffled.row(static_cast<Eigen::Index>(t) * s_tokens + s) =
                    features.row(static_cast<Eigen::Index>(t) * s_tokens + perm[s]);
        }
        const double dev =
            (resampler.forward(shuffled, t_steps, s_tokens, time_emb, latents) - base)
                .cwiseAbs()
                .maxCoeff();
        report.measured["kv_permutation_dev"] = dev;
        if (dev > tol) report.fail("kv_permutation");
    }

    { // permuting latent queries permutes outputs the same way
        std::vector<std::uint32_t> perm(rcfg.num_latents);
        for (std::uint32_t i = 0; i < rcfg.num_latents; ++i) perm[i] = i;
        rng.shuffle(perm);
        Eigen::MatrixXd latents_perm(latents.rows(), latents.cols());
        for (std::uint32_t i = 0; i < rcfg.num_latents; ++i)
            latents_perm.row(i) = latents.row(perm[i]);
        const Eigen::MatrixXd out =
            resampler.forward(features, t_steps, s_tokens, time_emb, latents_perm);
        double dev = 0.0;
        for (std::uint32_t i = 0; i < rcfg.num_latents; ++i)
            dev = std::max(dev, (out.row(i) - base.row(perm[i])).cwiseAbs().maxCoeff());
        report.measured["latent_equivariance_dev"] = dev;
        if (dev > tol) report.fail("latent_equivariance");
    }

    { // zeroed output projections turn every layer into the identity
        PerceiverResampler zeroed = resampler;
        for (auto& layer : zeroed.layers()) {
            layer.wo.setZero();
            layer.ffw2.setZero();
            layer.ffw_b2.setZero();
        }
        const double dev =
            (zeroed.forward(features, t_steps, s_tokens, time_emb, latents) - latents)
                .cwiseAbs()
                .maxCoeff();
        report.measured["residual_identity_dev"] = dev;
        if (dev != 0.0) report.fail("residual_identity");
    }

    return finish_report(report, cfg, "resampler-check", raw_args);
}

// ---------------------------------------------------------------------------
// grad-check

int cmd_grad_check(RunConfig& cfg, const CliArgs& cli, const std::vector<std::string>& raw_args) {
    declare_common(cfg, "grad_check");
    cfg.declare("models", "both"); // tabular | linear | both
    cfg.declare("instances", "20");
    cfg.declare("vocab", "5");
    cfg.declare("k", "8");
    cfg.declare("embed_dim", "6");
    cfg.declare("mask_ratio", "0.4");
    cfg.declare("h", "1e-5");
    cfg.declare("tol", "1e-4");
    apply_cli(cfg, cli);

    const std::string models = cfg.get_str("models");
    if (models != "tabular" && models != "linear" && models != "both")
        throw Error(ErrorCode::config_error, "models must be tabular, linear or both");
    const std::uint64_t instances = cfg.get_u64("instances");
    const std::uint32_t vocab = to_u32(cfg.get_u64("vocab"), "vocab");
    const std::uint32_t k = to_u32(cfg.get_u64("k"), "k");
    const std::uint32_t embed_dim = to_u32(cfg.get_u64("embed_dim"), "embed_dim");
    const double mask_ratio = cfg.get_real("mask_ratio");
    const double h = cfg.get_real("h");
    const double tol = cfg.get_real("tol");
    const std::uint64_t seed = cfg.get_u64("seed");

    ExperimentReport report;
    report.experiment = "grad_check";
    report.config = cfg.to_json();
    report.csv_header = {"instance", "model", "loss", "max_rel_error"};

    const std::vector<std::pair<LossKind, std::string>> losses = {
        {LossKind::random, "random"}, {LossKind::next, "next"}, {LossKind::next_all, "next_all"}};
    std::vector<std::string> kinds;
    if (models == "tabular" || models == "both") kinds.push_back("tabular");
    if (models == "linear" || models == "both") kinds.push_back("linear");

    for (const std::string& kind : kinds) {
        for (std::size_t li = 0; li < losses.size(); ++li) {
            const auto& [loss_kind, loss_name] = losses[li];
            double worst = 0.0;
            for (std::uint64_t inst = 0; inst < instances; ++inst) {
                Rng rng = derive_rng(seed, 7000 + inst);
                TokenSequence seq;
                seq.id = "grad-" + std::to_string(inst);
                seq.vocab_size = vocab;
                for (std::uint32_t i = 0; i < k; ++i)
                    seq.tokens.push_back(static_cast<Token>(rng.below(vocab)));
                const MaskPattern mask = sample_mask(k, mask_ratio, rng);
                const Path path = make_path(k, PathKind::seeded_permutation, rng);

                std::unique_ptr<PredictorModel> model;
                if (kind == "tabular") {
                    auto tab = std::make_unique<TabularPredictor>(vocab);
                    for (double& p : tab->params()) p += 0.5 * rng.gaussian();
                    model = std::move(tab);
                } else {
                    model = std::make_unique<LinearSoftmaxPredictor>(
                        vocab, embed_dim, mix_u64(seed ^ (7100 + inst)));
                }
                const GradCheckReport gc = grad_check_loss(*model, loss_kind, seq, mask, path, h);
                worst = std::max(worst, gc.max_rel_error);
                report.csv_rows.push_back({static_cast<double>(inst),
                                           kind == "tabular" ? 0.0 : 1.0,
                                           static_cast<double>(li), gc.max_rel_error});
            }
            report.measured["max_rel_error_" + kind + "_" + loss_name] = worst;
            if (worst > tol) report.fail("grad_" + kind + "_" + loss_name);
        }
    }
    report.bounds["tol"] = tol;
    return finish_report(report, cfg, "grad-check", raw_args);
}

// ---------------------------------------------------------------------------
// tokenize

int cmd_tokenize(RunConfig& cfg, const CliArgs& cli, const std::vector<std::string>& raw_args) {
    declare_common(cfg, "tokenize");
    cfg.declare("input", "");
    cfg.declare("output", ""); // default: <out_dir>/<name>.jsonl
    cfg.declare("vocab", "16");
    cfg.declare("patch_d", "1");
    cfg.declare("patch_h", "4");
    cfg.declare("patch_w", "4");
    cfg.declare("k", "64");
    apply_cli(cfg, cli);

    const std::string input = cfg.get_str("input");
    if (input.empty()) throw Error(ErrorCode::config_error, "tokenize requires --input");
    std::string output = cfg.get_str("output");
    if (output.empty())
        output = cfg.get_str("out_dir") + "/" + cfg.get_str("name") + ".jsonl";
    const std::uint32_t vocab = to_u32(cfg.get_u64("vocab"), "vocab");
    const std::uint32_t k = to_u32(cfg.get_u64("k"), "k");
    if (k == 0) throw Error(ErrorCode::config_error, "k must be >= 1");

    const Volume volume = load_volume(input);
    const TokenSequence all = tokenize_volume(volume, to_u32(cfg.get_u64("patch_d"), "patch_d"),
                                              to_u32(cfg.get_u64("patch_h"), "patch_h"),
                                              to_u32(cfg.get_u64("patch_w"), "patch_w"), vocab);
    if (all.tokens.size() < k)
        throw Error(ErrorCode::invalid_argument,
                    "volume yields " + std::to_string(all.tokens.size()) +
                        " tokens, fewer than k=" + std::to_string(k));
    std::vector<TokenSequence> corpus;
    for (std::size_t start = 0; start + k <= all.tokens.size(); start += k) {
        TokenSequence seq;
        seq.id = "seq-" + std::to_string(corpus.size());
        seq.vocab_size = vocab;
        seq.tokens.assign(all.tokens.begin() + static_cast<std::ptrdiff_t>(start),
                          all.tokens.begin() + static_cast<std::ptrdiff_t>(start + k));
        corpus.push_back(std::move(seq));
    }
    save_corpus(corpus, output);
    write_run_files(cfg, "tokenize", raw_args);

    ordered_json summary;
    summary["experiment"] = "tokenize";
    summary["sequences"] = corpus.size();
    summary["sequence_length"] = k;
    summary["vocab_size"] = vocab;
    summary["total_tokens"] = all.tokens.size();
    summary["output"] = output;
    summary["pass"] = true;
    std::cout << summary.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

void print_usage(std::ostream& os) {
    os << "usage: tokenlab <subcommand> [--config PATH] [--key VALUE]...\n"
          "\n"
          "subcommands:\n"
          "  pretrain         train a predictor on a corpus (or synthetic chain)\n"
          "  schedule         evaluate curriculum / alternating schedules\n"
          "  err-accum        error-accumulation bound experiment\n"
          "  ar-conv          AR(p) convergence experiment\n"
          "  lad-scaling      LAD-Lasso error-scaling experiment\n"
          "  altopt-conv      alternating-SGD convergence experiment\n"
          "  mi-check         information-complementarity checks\n"
          "  metrics          VOI / ARAND between two label volumes\n"
          "  resampler-check  resampler invariance checks\n"
          "  grad-check       analytic-vs-numeric gradient checks\n"
          "  tokenize         volume -> token-corpus conversion\n"
          "\n"
          "`--config default` (or omitting --config) uses built-in defaults.\n"
          "The environment variable TU_OUT_DIR sets the default out_dir.\n";
}

} // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty()) {
        print_usage(std::cerr);
        std::cout << R"({"error":"missing subcommand"})" << "\n";
        return 1;
    }
    const std::string sub = args.front();
    if (sub == "help" || sub == "--help" || sub == "-h") {
        print_usage(std::cout);
        return 0;
    }
    const std::vector<std::string> rest(args.begin() + 1, args.end());

    try {
        const CliArgs cli = parse_cli(rest);
        RunConfig cfg;
        if (sub == "pretrain") return cmd_pretrain(cfg, cli, args);
        if (sub == "schedule") return cmd_schedule(cfg, cli, args);
        if (sub == "err-accum") return cmd_err_accum(cfg, cli, args);
        if (sub == "ar-conv") return cmd_ar_conv(cfg, cli, args);
        if (sub == "lad-scaling") return cmd_lad_scaling(cfg, cli, args);
        if (sub == "altopt-conv") return cmd_altopt_conv(cfg, cli, args);
        if (sub == "mi-check") return cmd_mi_check(cfg, cli, args);
        if (sub == "metrics") return cmd_metrics(cfg, cli, args);
        if (sub == "resampler-check") return cmd_resampler_check(cfg, cli, args);
        if (sub == "grad-check") return cmd_grad_check(cfg, cli, args);
        if (sub == "tokenize") return cmd_tokenize(cfg, cli, args);
        print_usage(std::cerr);
        ordered_json err{{"error", "unknown subcommand '" + sub + "'"}};
        std::cout << err.dump() << "\n";
        return 1;
    } catch (const Error& e) {
        ordered_json err{{"error", e.what()}, {"code", error_code_name(e.code())}};
        std::cout << err.dump() << "\n";
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        ordered_json err{{"error", e.what()}};
        std::cout << err.dump() << "\n";
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
