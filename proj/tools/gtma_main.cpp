// Command line front end: dataset generation, single-instance optimization,
// evaluation, ablation sweeps, and the gradient-check harness.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gtma/benchmark.hpp"
#include "gtma/io.hpp"
#include "gtma/rng.hpp"

namespace {

namespace fs = std::filesystem;
using gtma::AblationVariant;
using gtma::ExperimentConfig;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitAssertion = 5;

struct CommonFlags {
    std::string config_path;
    std::string out_override;
    std::string format_override;
    std::string seeds_override;
};

void apply_overrides(ExperimentConfig& cfg, const CommonFlags& flags) {
    if (!flags.out_override.empty()) cfg.out_dir = flags.out_override;
    if (!flags.format_override.empty()) {
        if (flags.format_override == "json") {
            cfg.formats = {true, false};
        } else if (flags.format_override == "csv") {
            cfg.formats = {false, true};
        } else if (flags.format_override == "both") {
            cfg.formats = {true, true};
        } else {
            throw gtma::ConfigError("--format must be json, csv, or both");
        }
    }
    if (!flags.seeds_override.empty()) {
        cfg.seeds = gtma::parse_seed_list(flags.seeds_override);
    }
}

void write_manifest(const fs::path& out_dir, const nlohmann::json& canonical,
                    const std::vector<std::uint64_t>& seeds,
                    const std::vector<std::string>& outputs) {
    gtma::write_text_file(
        out_dir / "run_manifest.json",
        gtma::make_run_manifest(canonical, seeds, outputs).dump(2) + "\n");
}

int run_generate(const CommonFlags& flags) {
    ExperimentConfig cfg =
        gtma::load_experiment_config(flags.config_path);
    apply_overrides(cfg, flags);
    const fs::path out_dir(cfg.out_dir);
    const nlohmann::json canonical = gtma::experiment_config_to_json(cfg);
    write_manifest(out_dir, canonical, {cfg.benchmark.seed}, {"fixture.json"});

    const gtma::GeneratedBenchmark bench =
        gtma::generate_benchmark(cfg.benchmark);
    gtma::write_text_file(out_dir / "fixture.json",
                          gtma::fixture_to_json(bench).dump(2) + "\n");

    std::size_t support = 0;
    for (const auto& inst : bench.instances) {
        if (inst.split == gtma::Split::Support) ++support;
    }
    std::cout << "fixture written to " << (out_dir / "fixture.json").string()
              << "\n"
              << "concepts: " << bench.concepts.size() << " ("
              << cfg.benchmark.num_seen << " seen, " << cfg.benchmark.num_ood
              << " ood)\n"
              << "vocabulary tokens: " << bench.vocab.size() << "\n"
              << "instances: " << bench.instances.size() << " (" << support
              << " support, " << bench.instances.size() - support
              << " test)\n";
    return kExitOk;
}

int run_optimize(const CommonFlags& flags, const std::string& fixture_path,
                 int instance_id) {
    ExperimentConfig cfg = gtma::load_experiment_config(flags.config_path);
    apply_overrides(cfg, flags);
    const gtma::GeneratedBenchmark bench =
        gtma::fixture_from_json(gtma::load_json_file(fixture_path));

    const gtma::Instance* instance = nullptr;
    for (const auto& inst : bench.instances) {
        if (inst.id == instance_id) {
            instance = &inst;
            break;
        }
    }
    if (instance == nullptr) {
        throw gtma::UnknownInstanceError("no instance with id " +
                                         std::to_string(instance_id));
    }

    const fs::path out_dir(cfg.out_dir);
    const nlohmann::json canonical = gtma::experiment_config_to_json(cfg);
    write_manifest(out_dir, canonical, {cfg.benchmark.seed},
                   {"trajectory.csv", "trajectory.json"});

    const gtma::VisualAnchor anchor =
        gtma::refine_anchor(instance->patches, bench.attention);
    const gtma::Trajectory traj = gtma::grpo_run(
        anchor, bench.encoder, bench.vocab, bench.prompt, cfg.grpo);
    const gtma::ObjectiveValue obj =
        gtma::objective_value(traj.z_star, anchor, bench.encoder, bench.vocab,
                              bench.prompt, cfg.grpo);

    if (cfg.formats.csv) {
        gtma::write_text_file(out_dir / "trajectory.csv",
                              gtma::trajectory_csv(traj));
    }
    if (cfg.formats.json) {
        gtma::write_text_file(
            out_dir / "trajectory.json",
            gtma::trajectory_json(traj, cfg.grpo, obj.score, obj.regularizer)
                    .dump(2) +
                "\n");
    }
    std::cout << "instance " << instance_id << ": steps=" << traj.steps.size()
              << " final_score=" << gtma::format_double(obj.score)
              << " final_regularizer=" << gtma::format_double(obj.regularizer)
              << "\n";
    return kExitOk;
}

int run_eval(const CommonFlags& flags, const std::string& fixture_path,
             const std::string& variant_name_arg, bool baseline_only) {
    ExperimentConfig cfg = gtma::load_experiment_config(flags.config_path);
    apply_overrides(cfg, flags);
    const AblationVariant variant = gtma::variant_from_name(variant_name_arg);

    const fs::path out_dir(cfg.out_dir);
    const nlohmann::json canonical = gtma::experiment_config_to_json(cfg);

    std::vector<gtma::SeedReports> per_seed;
    if (!fixture_path.empty()) {
        if (!flags.seeds_override.empty()) {
            throw gtma::ConfigError(
                "--seeds cannot be combined with --fixture (the fixture "
                "carries one dataset)");
        }
        const gtma::GeneratedBenchmark bench =
            gtma::fixture_from_json(gtma::load_json_file(fixture_path));
        write_manifest(out_dir, canonical, {bench.spec.seed},
                       {"eval_summary.json", "eval_summary.csv"});
        gtma::SeedReports sr;
        sr.seed = bench.spec.seed;
        sr.baseline = gtma::evaluate(bench, gtma::baseline_text_embeddings(bench),
                                     AblationVariant::Full);
        if (!baseline_only) {
            sr.gtma = gtma::evaluate(
                bench,
                gtma::gtma_embeddings(bench, cfg.grpo, variant, cfg.eval_shots,
                                      cfg.aggregation),
                variant);
        }
        per_seed.push_back(std::move(sr));
    } else {
        write_manifest(out_dir, canonical, cfg.seeds,
                       {"eval_summary.json", "eval_summary.csv"});
        for (std::uint64_t seed : cfg.seeds) {
            gtma::SeedReports sr;
            sr.seed = seed;
            if (baseline_only) {
                gtma::BenchmarkSpec seeded = cfg.benchmark;
                seeded.seed = seed;
                const gtma::GeneratedBenchmark bench =
                    gtma::generate_benchmark(seeded);
                sr.baseline =
                    gtma::evaluate(bench, gtma::baseline_text_embeddings(bench),
                                   AblationVariant::Full);
            } else {
                gtma::PipelineOutcome outcome =
                    gtma::run_pipeline(cfg.benchmark, cfg.grpo, variant,
                                       cfg.eval_shots, cfg.aggregation, seed);
                sr.baseline = std::move(outcome.baseline);
                sr.gtma = std::move(outcome.gtma);
            }
            per_seed.push_back(std::move(sr));
        }
    }

    if (cfg.formats.json) {
        gtma::write_text_file(
            out_dir / "eval_summary.json",
            gtma::eval_summary_json(cfg, variant, per_seed).dump(2) + "\n");
    }
    if (cfg.formats.csv) {
        gtma::write_text_file(
            out_dir / "eval_summary.csv",
            gtma::eval_summary_csv(variant, cfg.eval_shots, per_seed));
    }

    std::vector<double> baseline_ood;
    std::vector<double> gtma_ood;
    for (const auto& sr : per_seed) {
        if (sr.baseline.ood_accuracy) {
            baseline_ood.push_back(*sr.baseline.ood_accuracy);
        }
        if (sr.gtma && sr.gtma->ood_accuracy) {
            gtma_ood.push_back(*sr.gtma->ood_accuracy);
        }
    }
    std::cout << "eval (" << per_seed.size() << " seeds, variant="
              << gtma::variant_name(variant) << ", shots=" << cfg.eval_shots
              << ")\n";
    if (!baseline_ood.empty()) {
        std::cout << "baseline ood accuracy mean: "
                  << gtma::aggregate_metric(baseline_ood).mean << "\n";
    }
    if (!gtma_ood.empty()) {
        std::cout << "gtma ood accuracy mean: "
                  << gtma::aggregate_metric(gtma_ood).mean << "\n";
    }
    return kExitOk;
}

int run_ablate(const CommonFlags& flags, bool assert_ordering) {
    ExperimentConfig cfg = gtma::load_experiment_config(flags.config_path);
    apply_overrides(cfg, flags);
    if (cfg.variants.size() < 2) {
        throw gtma::ConfigError(
            "ablation needs at least two variants in eval.variants");
    }

    const fs::path out_dir(cfg.out_dir);
    const nlohmann::json canonical = gtma::experiment_config_to_json(cfg);
    write_manifest(out_dir, canonical, cfg.seeds,
                   {"ablation.json", "ablation.csv"});

    const gtma::AblationTable table =
        gtma::run_ablation(cfg.benchmark, cfg.grpo, cfg.variants, cfg.seeds,
                           cfg.eval_shots, cfg.aggregation);

    if (cfg.formats.json) {
        gtma::write_text_file(out_dir / "ablation.json",
                              gtma::ablation_json(table).dump(2) + "\n");
    }
    if (cfg.formats.csv) {
        gtma::write_text_file(out_dir / "ablation.csv",
                              gtma::ablation_csv(table));
    }

    const gtma::AblationRow* full = nullptr;
    for (const auto& row : table.rows) {
        if (row.variant == AblationVariant::Full) full = &row;
    }
    for (const auto& row : table.rows) {
        std::printf("%-22s open=%.4f +/- %.4f drop=%+.4f\n",
                    gtma::variant_name(row.variant).c_str(), row.open.mean,
                    row.open.stddev, -row.drop_open);
    }

    if (assert_ordering && full != nullptr) {
        for (const auto& row : table.rows) {
            if (row.variant == AblationVariant::Full) continue;
            const bool beats_mean = row.open.mean > full->open.mean;
            const bool disjoint_ci = row.open.ci95_lo > full->open.ci95_hi;
            if (beats_mean && disjoint_ci) {
                std::cerr << "ordering assertion failed: "
                          << gtma::variant_name(row.variant)
                          << " beats full beyond the 95% CI\n";
                return kExitAssertion;
            }
        }
        std::cout << "ordering assertion passed\n";
    }
    return kExitOk;
}

struct GradcheckOptions {
    std::size_t trials = 200;
    std::string dims = "4,16,64";
    std::string modes =
        "mean_pool_identity,mean_pool_projected,one_hidden_mlp";
    double tolerance = 1e-5;
    std::uint64_t seed = 1234;
    bool corrupt = false;
};

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t end = text.find(',', start);
        out.push_back(text.substr(
            start, end == std::string::npos ? std::string::npos : end - start));
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return out;
}

int run_gradcheck(const GradcheckOptions& opt) {
    if (opt.trials < 1) {
        throw gtma::ConfigError("gradcheck: trials must be >= 1");
    }
    std::vector<std::size_t> dims;
    for (const std::string& d : split_csv(opt.dims)) {
        dims.push_back(std::stoull(d));
    }
    std::vector<gtma::EncoderMode> modes;
    for (const std::string& m : split_csv(opt.modes)) {
        modes.push_back(gtma::encoder_mode_from_name(m));
    }
    if (dims.empty() || modes.empty()) {
        throw gtma::ConfigError("gradcheck: dims and modes must be non-empty");
    }

    double max_rel = 0.0;
    std::uint64_t worst_seed = 0;
    std::size_t failures = 0;
    std::uint64_t first_failure_seed = 0;

    for (std::size_t trial = 0; trial < opt.trials; ++trial) {
        const std::uint64_t trial_seed = opt.seed + trial;
        gtma::Rng rng(trial_seed);
        const gtma::EncoderMode mode = modes[trial % modes.size()];

        const std::size_t d_e = dims[rng.uniform_index(dims.size())];
        std::size_t d_tok = d_e;
        gtma::TextEncoderParams params =
            gtma::TextEncoderParams::mean_pool_identity(d_e);
        if (mode == gtma::EncoderMode::MeanPoolProjected) {
            d_tok = dims[rng.uniform_index(dims.size())];
            params = gtma::TextEncoderParams::mean_pool_projected(
                rng.normal_mat(d_e, d_tok,
                               1.0 / std::sqrt(static_cast<double>(d_tok))));
        } else if (mode == gtma::EncoderMode::OneHiddenMlp) {
            d_tok = dims[rng.uniform_index(dims.size())];
            const std::size_t d_h = dims[rng.uniform_index(dims.size())];
            params = gtma::TextEncoderParams::one_hidden_mlp(
                rng.normal_mat(d_h, d_tok,
                               1.0 / std::sqrt(static_cast<double>(d_tok))),
                rng.normal_mat(d_e, d_h,
                               1.0 / std::sqrt(static_cast<double>(d_h))));
        }

        const std::size_t vocab_size = 2 + rng.uniform_index(7);
        std::vector<gtma::Vec64> rows;
        for (std::size_t r = 0; r < vocab_size; ++r) {
            rows.push_back(rng.normal_vec(
                d_tok, 1.0 / std::sqrt(static_cast<double>(d_tok))));
        }
        std::vector<std::string> names;
        for (std::size_t r = 0; r < vocab_size; ++r) {
            names.push_back("tok_" + std::to_string(r));
        }
        const gtma::VocabularyTable vocab(gtma::Mat64::from_rows(rows),
                                          std::move(names));

        const std::size_t length = 1 + rng.uniform_index(6);
        std::vector<std::size_t> ids(length, 0);
        for (auto& id : ids) id = rng.uniform_index(vocab_size);
        const gtma::Template tmpl(ids, rng.uniform_index(length));

        const gtma::VisualAnchor anchor(rng.unit_vec(d_e), false);
        const gtma::Vec64 z =
            gtma::scale(rng.unit_vec(d_tok), rng.uniform(0.5, 2.0));

        gtma::Vec64 analytic =
            gtma::alignment_gradient(anchor, params, vocab, tmpl, z);
        if (opt.corrupt) {
            std::vector<double> bad = analytic.values();
            bad[0] += 1e-3;
            analytic = gtma::Vec64(std::move(bad));
        }
        const gtma::Vec64 numeric = gtma::finite_diff_gradient(
            [&](const gtma::Vec64& probe) {
                return gtma::alignment_score(anchor, params, vocab, tmpl,
                                             probe);
            },
            z);
        const double rel =
            gtma::norm(gtma::sub(analytic, numeric)) /
            std::max(gtma::norm(numeric), 1e-8);
        if (rel > max_rel) {
            max_rel = rel;
            worst_seed = trial_seed;
        }
        if (rel > opt.tolerance) {
            if (failures == 0) first_failure_seed = trial_seed;
            ++failures;
        }
    }

    const bool pass = failures == 0;
    std::printf(
        "gradcheck: trials=%zu modes=%zu dims=%s max_rel_err=%.3e tol=%.1e "
        "-> %s\n",
        opt.trials, modes.size(), opt.dims.c_str(), max_rel, opt.tolerance,
        pass ? "PASS" : "FAIL");
    std::printf("worst trial seed=%llu\n",
                static_cast<unsigned long long>(worst_seed));
    if (!pass) {
        std::printf("failing trials=%zu first failing trial seed=%llu\n",
                    failures,
                    static_cast<unsigned long long>(first_failure_seed));
        return kExitAssertion;
    }
    return kExitOk;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const gtma::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const gtma::UnknownInstanceError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const gtma::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const gtma::Error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Pseudo-word synthesis testbed: optimize continuous token embeddings "
        "against visual anchors and evaluate on a synthetic seen/OOD "
        "benchmark"};
    app.require_subcommand(1);

    CommonFlags flags;

    auto* generate = app.add_subcommand(
        "generate", "Generate a dataset fixture from a config file");
    generate->add_option("--config", flags.config_path, "Experiment config")
        ->required();
    generate->add_option("--out", flags.out_override, "Output directory");

    auto* optimize = app.add_subcommand(
        "optimize", "Run the optimizer on one fixture instance");
    std::string fixture_path;
    int instance_id = 0;
    optimize->add_option("--config", flags.config_path, "Experiment config")
        ->required();
    optimize->add_option("--fixture", fixture_path, "Fixture file")->required();
    optimize->add_option("--instance", instance_id, "Instance id")->required();
    optimize->add_option("--out", flags.out_override, "Output directory");
    optimize->add_option("--format", flags.format_override,
                         "json, csv, or both");

    auto* eval = app.add_subcommand(
        "eval", "Evaluate baseline and synthesized embeddings over seeds");
    std::string eval_variant = "full";
    std::string eval_fixture;
    bool baseline_only = false;
    eval->add_option("--config", flags.config_path, "Experiment config")
        ->required();
    eval->add_option("--fixture", eval_fixture,
                     "Evaluate one existing fixture instead of regenerating "
                     "per seed");
    eval->add_option("--variant", eval_variant, "Ablation variant tag");
    eval->add_flag("--baseline-only", baseline_only,
                   "Skip pseudo-word synthesis");
    eval->add_option("--seeds", flags.seeds_override,
                     "Seed list, e.g. 0-19 or 1,2,3");
    eval->add_option("--out", flags.out_override, "Output directory");
    eval->add_option("--format", flags.format_override, "json, csv, or both");

    auto* ablate = app.add_subcommand(
        "ablate", "Run the component ablation table over seeds");
    bool assert_ordering = false;
    ablate->add_option("--config", flags.config_path, "Experiment config")
        ->required();
    ablate->add_option("--seeds", flags.seeds_override,
                       "Seed list, e.g. 0-19 or 1,2,3");
    ablate->add_flag("--assert-ordering", assert_ordering,
                     "Exit nonzero if an ablated variant beats full beyond "
                     "the 95% CI");
    ablate->add_option("--out", flags.out_override, "Output directory");
    ablate->add_option("--format", flags.format_override, "json, csv, or both");

    auto* gradcheck = app.add_subcommand(
        "gradcheck", "Compare the analytic gradient to finite differences");
    GradcheckOptions gopt;
    gradcheck->add_option("--trials", gopt.trials, "Number of random configs");
    gradcheck->add_option("--dims", gopt.dims, "Comma-separated dims");
    gradcheck->add_option("--modes", gopt.modes, "Comma-separated modes");
    gradcheck->add_option("--tol", gopt.tolerance, "Relative error tolerance");
    gradcheck->add_option("--seed", gopt.seed, "Base seed");
    gradcheck->add_flag("--corrupt", gopt.corrupt, "Test hook: perturb the analytic gradient")
        ->group("");  // hidden

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (generate->parsed()) return guarded([&] { return run_generate(flags); });
    if (optimize->parsed()) {
        return guarded(
            [&] { return run_optimize(flags, fixture_path, instance_id); });
    }
    if (eval->parsed()) {
        return guarded([&] {
            return run_eval(flags, eval_fixture, eval_variant, baseline_only);
        });
    }
    if (ablate->parsed()) {
        return guarded([&] { return run_ablate(flags, assert_ordering); });
    }
    if (gradcheck->parsed()) {
        return guarded([&] { return run_gradcheck(gopt); });
    }
    return kExitConfig;
}
