// Acceptance suite: runs every release criterion and prints one PASS/FAIL
// line per criterion. Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtma/benchmark.hpp"
#include "gtma/io.hpp"
#include "gtma/rng.hpp"

namespace fs = std::filesystem;
using namespace gtma;

namespace {

// Calibrated evaluation defaults shared by the benchmark-level criteria.
// They match configs/default.json.
GrpoConfig default_eval_config() {
    GrpoConfig cfg;
    cfg.eta0 = 2.0;
    cfg.lambda = 0.02;
    cfg.beta = 10.0;
    cfg.gamma = 0.5;
    cfg.iterations = 120;
    cfg.projection = ProjectionMode::hard_nearest();
    cfg.init = InitMode::nearest_vocab();
    return cfg;
}

constexpr std::size_t kEvalShots = 4;

std::vector<std::uint64_t> twenty_seeds() {
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 20; ++s) seeds.push_back(s);
    return seeds;
}

struct CriterionOutcome {
    bool pass = false;
    std::string detail;
};

using Criterion = std::function<CriterionOutcome()>;

struct RandomEncoderSetup {
    TextEncoderParams params;
    VocabularyTable vocab;
    Template tmpl;
    VisualAnchor anchor;
    Vec64 z;
};

VocabularyTable random_vocab(Rng& rng, std::size_t size, std::size_t dim) {
    std::vector<Vec64> rows;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < size; ++i) {
        rows.push_back(
            rng.normal_vec(dim, 1.0 / std::sqrt(static_cast<double>(dim))));
        names.push_back("tok_" + std::to_string(i));
    }
    return VocabularyTable(Mat64::from_rows(rows), std::move(names));
}

RandomEncoderSetup random_setup(std::uint64_t seed, EncoderMode mode,
                                const std::vector<std::size_t>& dims) {
    Rng rng(seed);
    const std::size_t d_e = dims[rng.uniform_index(dims.size())];
    std::size_t d_tok = d_e;
    TextEncoderParams params = TextEncoderParams::mean_pool_identity(d_e);
    if (mode == EncoderMode::MeanPoolProjected) {
        d_tok = dims[rng.uniform_index(dims.size())];
        params = TextEncoderParams::mean_pool_projected(rng.normal_mat(
            d_e, d_tok, 1.0 / std::sqrt(static_cast<double>(d_tok))));
    } else if (mode == EncoderMode::OneHiddenMlp) {
        d_tok = dims[rng.uniform_index(dims.size())];
        const std::size_t d_h = dims[rng.uniform_index(dims.size())];
        params = TextEncoderParams::one_hidden_mlp(
            rng.normal_mat(d_h, d_tok,
                           1.0 / std::sqrt(static_cast<double>(d_tok))),
            rng.normal_mat(d_e, d_h,
                           1.0 / std::sqrt(static_cast<double>(d_h))));
    }
    VocabularyTable vocab = random_vocab(rng, 2 + rng.uniform_index(7), d_tok);
    const std::size_t length = 1 + rng.uniform_index(6);
    std::vector<std::size_t> ids(length, 0);
    for (auto& id : ids) id = rng.uniform_index(vocab.size());
    Template tmpl(ids, rng.uniform_index(length));
    VisualAnchor anchor(rng.unit_vec(d_e), false);
    Vec64 z = scale(rng.unit_vec(d_tok), rng.uniform(0.5, 2.0));
    return RandomEncoderSetup{std::move(params), std::move(vocab),
                              std::move(tmpl), std::move(anchor), std::move(z)};
}

// --- criterion 1 -----------------------------------------------------------

CriterionOutcome gradient_correctness() {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<std::size_t> dims = {4, 16, 64};
    const std::vector<EncoderMode> modes = {EncoderMode::MeanPoolIdentity,
                                            EncoderMode::MeanPoolProjected,
                                            EncoderMode::OneHiddenMlp};
    const std::size_t trials = 240;
    double max_rel = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const RandomEncoderSetup s =
            random_setup(9000 + trial, modes[trial % modes.size()], dims);
        const Vec64 analytic =
            alignment_gradient(s.anchor, s.params, s.vocab, s.tmpl, s.z);
        const Vec64 numeric = finite_diff_gradient(
            [&](const Vec64& probe) {
                return alignment_score(s.anchor, s.params, s.vocab, s.tmpl,
                                       probe);
            },
            s.z);
        const double rel =
            norm(sub(analytic, numeric)) / std::max(norm(numeric), 1e-8);
        max_rel = std::max(max_rel, rel);
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    std::ostringstream detail;
    detail << trials << " configs, max rel err " << max_rel << ", "
           << seconds << "s";
    return {max_rel < 1e-5 && seconds < 30.0, detail.str()};
}

// --- criterion 2 -----------------------------------------------------------

CriterionOutcome regularizer_invariants() {
    const ProjectionMode hard = ProjectionMode::hard_nearest();
    Rng rng(501);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t dim = 2 + rng.uniform_index(7);
        const VocabularyTable vocab =
            random_vocab(rng, 2 + rng.uniform_index(9), dim);
        const Vec64 z = rng.normal_vec(dim, 2.0);
        const Vec64 once = project_to_vocab(z, vocab, hard);
        const Vec64 twice = project_to_vocab(once, vocab, hard);
        if (once.values() != twice.values()) {
            return {false, "projection not idempotent"};
        }
        // R vanishes exactly on rows.
        for (std::size_t r = 0; r < vocab.size(); ++r) {
            const Vec64 g = regularization_gradient(vocab.row(r), vocab, hard);
            if (norm(g) != 0.0) {
                return {false, "nonzero residual on a vocabulary row"};
            }
        }
        // And only there (within 1e-12): any z at distance > 2e-6 from the
        // vocabulary has R = d^2/2 > 1e-12.
        double min_dist = norm(sub(z, once));
        if (min_dist > 2e-6) {
            const double reg = 0.5 * min_dist * min_dist;
            if (!(reg > 1e-12)) {
                return {false, "regularizer vanished away from the manifold"};
            }
        }
    }

    const VocabularyTable axes(Mat64(2, 2, {1.0, 0.0, 0.0, 1.0}), {"x", "y"});
    const Vec64 grad = regularization_gradient(Vec64({0.9, 0.1}), axes, hard);
    const bool exact = grad[0] == 0.9 - 1.0 && grad[1] == 0.1 - 0.0 &&
                       std::abs(grad[0] - (-0.1)) <= 1e-15 &&
                       std::abs(grad[1] - 0.1) <= 1e-15;
    if (!exact) return {false, "worked example gradient mismatch"};
    return {true, "idempotent, zero iff on-manifold, worked example exact"};
}

// --- criterion 3 -----------------------------------------------------------

CriterionOutcome adaptive_step_contract() {
    Rng rng(733);
    for (int draw = 0; draw < 10000; ++draw) {
        GrpoConfig cfg;
        cfg.eta0 = rng.uniform(1e-4, 1.0);
        cfg.lambda = 0.0;
        cfg.beta = rng.uniform(1e-3, 16.0);
        cfg.gamma = rng.uniform(-1.0, 1.0);
        cfg.iterations = 1;
        const double rho = rng.uniform(-1.0, 1.0);
        const double eta = adaptive_step(rho, cfg);
        if (!(eta > 0.0 && eta < cfg.eta0)) {
            return {false, "step left the open interval"};
        }
        if (std::abs(adaptive_step(cfg.gamma, cfg) - cfg.eta0 / 2.0) > 1e-12) {
            return {false, "midpoint rate is not eta0/2"};
        }
        const double rho_hi = std::min(1.0, rho + rng.uniform(1e-3, 0.5));
        const double eta_hi = adaptive_step(rho_hi, cfg);
        if (eta_hi < eta) {
            return {false, "step not monotone in rho"};
        }
        // Strict monotonicity is representable away from sigmoid saturation.
        const bool unsaturated =
            std::abs(cfg.beta * (rho - cfg.gamma)) <= 20.0 &&
            std::abs(cfg.beta * (rho_hi - cfg.gamma)) <= 20.0;
        if (unsaturated && rho_hi > rho && !(eta_hi > eta)) {
            return {false, "step not strictly monotone away from saturation"};
        }
    }
    return {true, "10000 draws: open interval, midpoint, monotone"};
}

// --- criterion 4 -----------------------------------------------------------

CriterionOutcome known_optimum_convergence() {
    const auto start = std::chrono::steady_clock::now();
    GrpoConfig cfg;
    cfg.eta0 = 0.5;
    cfg.lambda = 0.0;
    cfg.beta = 10.0;
    cfg.gamma = 0.0;
    cfg.iterations = 100;
    cfg.init = InitMode::nearest_vocab();

    std::size_t converged = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(4000 + seed);
        const std::size_t d = 16;
        const TextEncoderParams params =
            TextEncoderParams::mean_pool_identity(d);
        const VocabularyTable vocab = random_vocab(rng, 8, d);
        const VisualAnchor anchor(rng.unit_vec(d), false);
        const Trajectory traj =
            grpo_run(anchor, params, vocab, Template::slot_only(), cfg);
        const double final_score = alignment_score(
            anchor, params, vocab, Template::slot_only(), traj.z_star);
        if (final_score >= 0.99) ++converged;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    std::ostringstream detail;
    detail << converged << "/20 seeds reached 0.99, " << seconds << "s";
    return {converged >= 19 && seconds < 10.0, detail.str()};
}

// --- criterion 5 -----------------------------------------------------------

CriterionOutcome small_step_ascent() {
    GrpoConfig cfg;
    cfg.eta0 = 1e-3;
    cfg.lambda = 0.0;
    cfg.beta = 10.0;
    cfg.gamma = 0.0;
    cfg.iterations = 50;
    cfg.init = InitMode::nearest_vocab();

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(5000 + seed);
        const std::size_t d = 8;
        const TextEncoderParams params =
            TextEncoderParams::mean_pool_identity(d);
        const VocabularyTable vocab =
            random_vocab(rng, 3 + rng.uniform_index(5), d);
        const std::size_t length = 1 + rng.uniform_index(5);
        std::vector<std::size_t> ids(length, 0);
        for (auto& id : ids) id = rng.uniform_index(vocab.size());
        const Template tmpl(ids, rng.uniform_index(length));
        const VisualAnchor anchor(rng.unit_vec(d), false);
        const Trajectory traj = grpo_run(anchor, params, vocab, tmpl, cfg);
        for (std::size_t t = 1; t < traj.steps.size(); ++t) {
            if (traj.steps[t].score < traj.steps[t - 1].score - 1e-9) {
                std::ostringstream detail;
                detail << "score decreased at seed " << seed << " step " << t;
                return {false, detail.str()};
            }
        }
    }
    return {true, "50 instances, per-step slack 1e-9 held"};
}

// --- criterion 6 -----------------------------------------------------------

CriterionOutcome paper_default_sanity() {
    GrpoConfig cfg;
    cfg.eta0 = 0.01;
    cfg.lambda = 0.1;
    cfg.beta = 10.0;
    cfg.gamma = 0.5;
    cfg.iterations = 10;
    cfg.init = InitMode::nearest_vocab();

    const BenchmarkSpec spec;  // library defaults
    const GeneratedBenchmark bench = generate_benchmark(spec);
    double worst_delta = 1.0;
    for (const Instance& inst : bench.instances) {
        const VisualAnchor anchor = refine_anchor(inst.patches, bench.attention);
        try {
            const Trajectory traj = grpo_run(anchor, bench.encoder, bench.vocab,
                                             bench.prompt, cfg);
            const double initial = traj.steps.front().score;
            const double final_score = alignment_score(
                anchor, bench.encoder, bench.vocab, bench.prompt, traj.z_star);
            worst_delta = std::min(worst_delta, final_score - initial);
            if (final_score < initial - 0.05) {
                std::ostringstream detail;
                detail << "instance " << inst.id << " degraded by "
                       << initial - final_score;
                return {false, detail.str()};
            }
        } catch (const NonFiniteError& e) {
            return {false, std::string("diverged: ") + e.what()};
        }
    }
    std::ostringstream detail;
    detail << bench.instances.size()
           << " instances, worst score delta " << worst_delta;
    return {true, detail.str()};
}

// --- criteria 7 and 8 ------------------------------------------------------

struct AblationContext {
    AblationTable table;
};

const AblationContext& shared_ablation() {
    static const AblationContext ctx = [] {
        const BenchmarkSpec spec;  // library defaults: criterion geometry
        return AblationContext{run_ablation(spec, default_eval_config(),
                                            all_variants(), twenty_seeds(),
                                            kEvalShots,
                                            AggregationMode::MeanPseudoWord)};
    }();
    return ctx;
}

const AblationRow& row_of(const AblationTable& table, AblationVariant v) {
    for (const AblationRow& row : table.rows) {
        if (row.variant == v) return row;
    }
    throw ConfigError("missing variant row");
}

CriterionOutcome directional_ood_improvement() {
    const auto start = std::chrono::steady_clock::now();
    const AblationTable& table = shared_ablation().table;
    const AblationRow& full = row_of(table, AblationVariant::Full);
    const double gain = full.ood.mean - table.baseline_ood.mean;
    const double seen_drop = table.baseline_seen.mean - full.seen.mean;
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    std::ostringstream detail;
    detail << "ood " << table.baseline_ood.mean << " -> " << full.ood.mean
           << " (+" << gain * 100.0 << " pts), seen drop "
           << seen_drop * 100.0 << " pts, " << seconds << "s";
    return {gain >= 0.20 && seen_drop < 0.02, detail.str()};
}

CriterionOutcome ablation_ordering() {
    const AblationTable& table = shared_ablation().table;
    const AblationRow& full = row_of(table, AblationVariant::Full);
    bool full_on_top = true;
    const AblationRow* worst = nullptr;
    for (const AblationRow& row : table.rows) {
        if (row.variant == AblationVariant::Full) continue;
        if (row.open.mean > full.open.mean) full_on_top = false;
        if (worst == nullptr || row.open.mean < worst->open.mean) {
            worst = &row;
        }
    }
    const AblationRow& no_opt = row_of(table, AblationVariant::NoPseudoWordOpt);
    const bool no_opt_worst =
        worst != nullptr &&
        (worst->variant == AblationVariant::NoPseudoWordOpt ||
         no_opt.open.ci95_lo <= worst->open.ci95_hi);
    std::ostringstream detail;
    detail << "open means:";
    for (const AblationRow& row : table.rows) {
        detail << ' ' << variant_name(row.variant) << '=' << row.open.mean;
    }
    return {full_on_top && no_opt_worst, detail.str()};
}

// --- criterion 9 -----------------------------------------------------------

CriterionOutcome few_shot_monotonicity() {
    const BenchmarkSpec spec;  // library defaults
    const std::vector<std::size_t> shot_grid = {1, 2, 4, 8, 16};
    std::map<std::size_t, std::vector<double>> ood_by_shots;

    for (std::uint64_t seed : twenty_seeds()) {
        BenchmarkSpec seeded = spec;
        seeded.seed = seed;
        const GeneratedBenchmark bench = generate_benchmark(seeded);
        const auto words = instance_pseudo_words(bench, default_eval_config(),
                                                 AblationVariant::Full);
        const std::vector<Vec64> base = baseline_text_embeddings(bench);
        for (std::size_t shots : shot_grid) {
            std::vector<Vec64> embeddings = base;
            for (const ConceptSpec& cls : bench.concepts) {
                if (cls.is_seen()) continue;
                embeddings[static_cast<std::size_t>(cls.id)] =
                    class_embedding_from_pseudo_words(
                        bench, words.at(cls.id), shots);
            }
            const EvalReport report =
                evaluate(bench, embeddings, AblationVariant::Full);
            ood_by_shots[shots].push_back(report.ood_accuracy.value_or(0.0));
        }
    }

    std::ostringstream detail;
    detail << "mean ood by shots:";
    double prev = -1.0;
    bool monotone = true;
    for (std::size_t shots : shot_grid) {
        const double mean = aggregate_metric(ood_by_shots[shots]).mean;
        detail << ' ' << shots << "->" << mean;
        if (prev >= 0.0 && mean < prev - 0.01) monotone = false;
        prev = mean;
    }
    return {monotone, detail.str()};
}

// --- criterion 10 ----------------------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(GTMA_CLI_BIN) + " " + args + " > " +
                            log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

CriterionOutcome cli_determinism() {
    const fs::path root =
        fs::temp_directory_path() /
        ("gtma_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);

    const nlohmann::json config = nlohmann::json::parse(R"({
      "benchmark": {
        "num_seen": 3, "num_ood": 3, "images_per_class": 6,
        "patches_per_image": 6, "noise_sigma": 0.1, "seed": 5,
        "dims": {"d_e": 24, "d_tok": 24, "d_k": 24},
        "shots": [1, 2, 4], "support_per_class": 4, "num_distractors": 4
      },
      "grpo": {"eta0": 2.0, "lambda": 0.02, "beta": 10.0, "gamma": 0.5,
               "iterations": 60},
      "eval": {"shots": 2, "seeds": [1, 2],
               "variants": ["full", "no_pseudo_word_opt"]}
    })");
    const fs::path cfg_path = root / "config.json";
    write_text_file(cfg_path, config.dump(2) + "\n");

    const std::vector<std::string> compare_files = {
        "gen/fixture.json",    "opt/trajectory.csv", "opt/trajectory.json",
        "eval/eval_summary.json", "eval/eval_summary.csv", "abl/ablation.json",
        "abl/ablation.csv"};

    for (const std::string& run : {"run1", "run2"}) {
        const fs::path base = root / run;
        if (run_cli("generate --config " + cfg_path.string() + " --out " +
                        (base / "gen").string(),
                    root / (run + "_gen.log")) != 0) {
            return {false, "generate failed"};
        }
        if (run_cli("optimize --config " + cfg_path.string() + " --fixture " +
                        (base / "gen" / "fixture.json").string() +
                        " --instance 20 --out " + (base / "opt").string(),
                    root / (run + "_opt.log")) != 0) {
            return {false, "optimize failed"};
        }
        if (run_cli("eval --config " + cfg_path.string() + " --out " +
                        (base / "eval").string(),
                    root / (run + "_eval.log")) != 0) {
            return {false, "eval failed"};
        }
        if (run_cli("ablate --config " + cfg_path.string() + " --out " +
                        (base / "abl").string(),
                    root / (run + "_abl.log")) != 0) {
            return {false, "ablate failed"};
        }
    }

    for (const std::string& rel : compare_files) {
        const std::string a = read_text_file(root / "run1" / rel);
        const std::string b = read_text_file(root / "run2" / rel);
        if (a != b) {
            return {false, rel + " differs between reruns"};
        }
    }
    fs::remove_all(root);
    std::ostringstream detail;
    detail << compare_files.size()
           << " result files byte-identical across reruns";
    return {true, detail.str()};
}

// --- criterion 11 ----------------------------------------------------------

CriterionOutcome zero_noise_exactness() {
    BenchmarkSpec spec;  // library defaults
    spec.noise_sigma = 0.0;
    for (std::uint64_t seed : {0, 1, 2}) {
        const PipelineOutcome outcome =
            run_pipeline(spec, default_eval_config(), AblationVariant::Full,
                         kEvalShots, AggregationMode::MeanPseudoWord, seed);
        if (outcome.gtma.open_accuracy != 1.0) {
            std::ostringstream detail;
            detail << "seed " << seed << " open accuracy "
                   << outcome.gtma.open_accuracy;
            return {false, detail.str()};
        }
        if (!outcome.baseline.seen_accuracy ||
            *outcome.baseline.seen_accuracy != 1.0) {
            std::ostringstream detail;
            detail << "seed " << seed << " baseline seen accuracy "
                   << outcome.baseline.seen_accuracy.value_or(-1.0);
            return {false, detail.str()};
        }
    }
    return {true, "open accuracy 1.0 and baseline seen 1.0 on 3 seeds"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, Criterion>> criteria = {
        {"gradient correctness (analytic vs central differences)",
         gradient_correctness},
        {"regularizer invariants (idempotence, zero set, worked example)",
         regularizer_invariants},
        {"adaptive step contract (open interval, midpoint, monotone)",
         adaptive_step_contract},
        {"known-optimum convergence (slot-only ascent)",
         known_optimum_convergence},
        {"small-step ascent (non-decreasing scores)", small_step_ascent},
        {"paper-default sanity (T=10, eta0=0.01, lambda=0.1)",
         paper_default_sanity},
        {"directional OOD improvement vs placeholder baseline",
         directional_ood_improvement},
        {"ablation ordering (full on top, frozen pseudo-words worst)",
         ablation_ordering},
        {"few-shot monotonicity over shots 1,2,4,8,16",
         few_shot_monotonicity},
        {"determinism (byte-identical CLI reruns)", cli_determinism},
        {"zero-noise exactness (open accuracy 1.0)", zero_noise_exactness},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        CriterionOutcome outcome;
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(
                                   std::chrono::steady_clock::now() - start)
                                   .count();
        std::printf("[%2zu] %s  %s  (%s; %.1fs)\n", i + 1,
                    outcome.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    outcome.detail.c_str(), seconds);
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    }
    if (failures > 0) {
        std::printf("%d criteria FAILED\n", failures);
    } else {
        std::printf("all %zu criteria passed\n", criteria.size());
    }
    return failures;
}
