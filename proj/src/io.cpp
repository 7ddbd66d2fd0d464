#include "gtma/io.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

namespace gtma {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

const json* find_node(const json& root, const std::string& dotted) {
    const json* node = &root;
    std::size_t start = 0;
    while (start <= dotted.size()) {
        const std::size_t end = dotted.find('.', start);
        const std::string key = dotted.substr(
            start, end == std::string::npos ? std::string::npos : end - start);
        if (!node->is_object() || !node->contains(key)) return nullptr;
        node = &(*node)[key];
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return node;
}

const json& require_node(const json& root, const std::string& path) {
    const json* node = find_node(root, path);
    if (node == nullptr) {
        throw ConfigError("missing required field: " + path);
    }
    return *node;
}

double require_double(const json& root, const std::string& path) {
    const json& node = require_node(root, path);
    if (!node.is_number()) {
        throw ConfigError("field " + path + ": expected a number");
    }
    return node.get<double>();
}

std::uint64_t require_u64(const json& root, const std::string& path) {
    const json& node = require_node(root, path);
    if (!node.is_number_unsigned() && !node.is_number_integer()) {
        throw ConfigError("field " + path + ": expected an integer");
    }
    if (node.is_number_integer() && node.get<std::int64_t>() < 0) {
        throw ConfigError("field " + path + ": expected a nonnegative integer");
    }
    return node.get<std::uint64_t>();
}

std::size_t require_size(const json& root, const std::string& path) {
    return static_cast<std::size_t>(require_u64(root, path));
}

std::string require_string(const json& root, const std::string& path) {
    const json& node = require_node(root, path);
    if (!node.is_string()) {
        throw ConfigError("field " + path + ": expected a string");
    }
    return node.get<std::string>();
}

double get_double_or(const json& root, const std::string& path, double dflt) {
    return find_node(root, path) == nullptr ? dflt : require_double(root, path);
}

std::size_t get_size_or(const json& root, const std::string& path,
                        std::size_t dflt) {
    return find_node(root, path) == nullptr ? dflt : require_size(root, path);
}

std::uint64_t get_u64_or(const json& root, const std::string& path,
                         std::uint64_t dflt) {
    return find_node(root, path) == nullptr ? dflt : require_u64(root, path);
}

std::string get_string_or(const json& root, const std::string& path,
                          const std::string& dflt) {
    return find_node(root, path) == nullptr ? dflt : require_string(root, path);
}

ordered_json vec_to_json(const Vec64& v) {
    ordered_json arr = ordered_json::array();
    for (std::size_t i = 0; i < v.dim(); ++i) arr.push_back(v[i]);
    return arr;
}

Vec64 vec_from_json(const json& node, const std::string& what) {
    if (!node.is_array() || node.empty()) {
        throw ConfigError(what + ": expected a non-empty array of numbers");
    }
    std::vector<double> values;
    values.reserve(node.size());
    for (const auto& x : node) {
        if (!x.is_number()) {
            throw ConfigError(what + ": expected a number");
        }
        values.push_back(x.get<double>());
    }
    return Vec64(std::move(values));
}

ordered_json mat_to_json(const Mat64& m) {
    ordered_json rows = ordered_json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        rows.push_back(vec_to_json(m.row(r)));
    }
    return rows;
}

Mat64 mat_from_json(const json& node, const std::string& what) {
    if (!node.is_array() || node.empty()) {
        throw ConfigError(what + ": expected a non-empty array of rows");
    }
    std::vector<Vec64> rows;
    rows.reserve(node.size());
    for (const auto& r : node) {
        rows.push_back(vec_from_json(r, what));
    }
    return Mat64::from_rows(rows);
}

ordered_json metric_to_json(const MetricAggregate& m) {
    return ordered_json{{"mean", m.mean},
                        {"std", m.stddev},
                        {"ci95", {m.ci95_lo, m.ci95_hi}}};
}

ProjectionMode projection_from_json(const json& root) {
    if (find_node(root, "grpo.projection") == nullptr) {
        return ProjectionMode::hard_nearest();
    }
    const std::string mode = require_string(root, "grpo.projection.mode");
    if (mode == "hard_nearest") return ProjectionMode::hard_nearest();
    if (mode == "soft_knn") {
        return ProjectionMode::soft_knn(
            require_size(root, "grpo.projection.k"),
            require_double(root, "grpo.projection.temperature"));
    }
    throw ConfigError("field grpo.projection.mode: unknown mode '" + mode + "'");
}

InitMode init_from_json(const json& root) {
    if (find_node(root, "grpo.init") == nullptr) {
        return InitMode::nearest_vocab();
    }
    const std::string mode = require_string(root, "grpo.init.mode");
    if (mode == "nearest_vocab") return InitMode::nearest_vocab();
    if (mode == "identity") return InitMode::identity();
    if (mode == "mlp") return InitMode::mlp(require_u64(root, "grpo.init.seed"));
    if (mode == "linear_map") {
        return InitMode::linear_map(require_u64(root, "grpo.init.seed"));
    }
    throw ConfigError("field grpo.init.mode: unknown mode '" + mode + "'");
}

ordered_json projection_to_json(const ProjectionMode& mode) {
    if (mode.kind == ProjectionMode::Kind::HardNearest) {
        return ordered_json{{"mode", "hard_nearest"}};
    }
    return ordered_json{{"mode", "soft_knn"},
                        {"k", mode.k},
                        {"temperature", mode.temperature}};
}

ordered_json init_to_json(const InitMode& mode) {
    switch (mode.kind) {
        case InitMode::Kind::NearestVocab:
            return ordered_json{{"mode", "nearest_vocab"}};
        case InitMode::Kind::Identity:
            return ordered_json{{"mode", "identity"}};
        case InitMode::Kind::Mlp:
            return ordered_json{{"mode", "mlp"}, {"seed", mode.seed}};
        case InitMode::Kind::LinearMap:
            return ordered_json{{"mode", "linear_map"}, {"seed", mode.seed}};
    }
    throw ConfigError("unknown init mode");
}

BenchmarkSpec benchmark_spec_from_json(const json& root) {
    BenchmarkSpec defaults;
    BenchmarkSpec spec;
    spec.num_seen = require_size(root, "benchmark.num_seen");
    spec.num_ood = require_size(root, "benchmark.num_ood");
    spec.images_per_class = require_size(root, "benchmark.images_per_class");
    spec.patches_per_image = require_size(root, "benchmark.patches_per_image");
    spec.noise_sigma = require_double(root, "benchmark.noise_sigma");
    spec.seed = require_u64(root, "benchmark.seed");
    spec.d_e = get_size_or(root, "benchmark.dims.d_e", defaults.d_e);
    spec.d_tok = get_size_or(root, "benchmark.dims.d_tok", defaults.d_tok);
    spec.d_k = get_size_or(root, "benchmark.dims.d_k", defaults.d_k);
    spec.encoder_mode = encoder_mode_from_name(get_string_or(
        root, "benchmark.encoder_mode", encoder_mode_name(defaults.encoder_mode)));
    if (const json* shots = find_node(root, "benchmark.shots")) {
        if (!shots->is_array()) {
            throw ConfigError("field benchmark.shots: expected an array");
        }
        spec.shots.clear();
        for (const auto& s : *shots) {
            if (!s.is_number_unsigned() && !s.is_number_integer()) {
                throw ConfigError("field benchmark.shots: expected integers");
            }
            spec.shots.push_back(s.get<std::size_t>());
        }
    }
    spec.support_per_class = get_size_or(root, "benchmark.support_per_class",
                                         defaults.support_per_class);
    spec.num_distractors =
        get_size_or(root, "benchmark.num_distractors", defaults.num_distractors);
    spec.prototype_spread = get_double_or(root, "benchmark.prototype_spread",
                                          defaults.prototype_spread);
    spec.distractor_spread = get_double_or(root, "benchmark.distractor_spread",
                                           defaults.distractor_spread);
    spec.background_fraction = get_double_or(
        root, "benchmark.background_fraction", defaults.background_fraction);
    spec.background_scale = get_double_or(root, "benchmark.background_scale",
                                          defaults.background_scale);
    spec.background_clutter =
        get_double_or(root, "benchmark.background_clutter",
                      defaults.background_clutter);
    spec.attention_gain =
        get_double_or(root, "benchmark.attention_gain", defaults.attention_gain);
    spec.validate();
    return spec;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& root) {
    ExperimentConfig cfg;
    cfg.benchmark = benchmark_spec_from_json(root);

    cfg.grpo.eta0 = require_double(root, "grpo.eta0");
    cfg.grpo.lambda = require_double(root, "grpo.lambda");
    cfg.grpo.beta = require_double(root, "grpo.beta");
    cfg.grpo.gamma = require_double(root, "grpo.gamma");
    cfg.grpo.iterations = require_size(root, "grpo.iterations");
    cfg.grpo.projection = projection_from_json(root);
    cfg.grpo.init = init_from_json(root);
    cfg.grpo.validate();

    cfg.eval_shots = get_size_or(root, "eval.shots", 4);
    cfg.aggregation = aggregation_from_name(get_string_or(
        root, "eval.aggregation", aggregation_name(cfg.aggregation)));
    if (const json* variants = find_node(root, "eval.variants")) {
        if (!variants->is_array() || variants->empty()) {
            throw ConfigError("field eval.variants: expected a non-empty array");
        }
        cfg.variants.clear();
        for (const auto& v : *variants) {
            if (!v.is_string()) {
                throw ConfigError("field eval.variants: expected strings");
            }
            cfg.variants.push_back(variant_from_name(v.get<std::string>()));
        }
    }
    if (const json* seeds = find_node(root, "eval.seeds")) {
        if (!seeds->is_array() || seeds->empty()) {
            throw ConfigError("field eval.seeds: expected a non-empty array");
        }
        cfg.seeds.clear();
        for (const auto& s : *seeds) {
            if (!s.is_number_unsigned() && !s.is_number_integer()) {
                throw ConfigError("field eval.seeds: expected integers");
            }
            cfg.seeds.push_back(s.get<std::uint64_t>());
        }
    } else {
        for (std::uint64_t s = 0; s < 20; ++s) cfg.seeds.push_back(s);
    }
    if (cfg.eval_shots < 1 || cfg.eval_shots > cfg.benchmark.support_per_class) {
        throw ConfigError(
            "field eval.shots: must lie in [1, benchmark.support_per_class]");
    }

    cfg.out_dir = get_string_or(root, "output.dir", "out");
    if (const json* formats = find_node(root, "output.formats")) {
        if (!formats->is_array() || formats->empty()) {
            throw ConfigError("field output.formats: expected a non-empty array");
        }
        cfg.formats.json = false;
        cfg.formats.csv = false;
        for (const auto& f : *formats) {
            const std::string name = f.is_string() ? f.get<std::string>() : "";
            if (name == "json") {
                cfg.formats.json = true;
            } else if (name == "csv") {
                cfg.formats.csv = true;
            } else {
                throw ConfigError("field output.formats: expected json or csv");
            }
        }
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return parse_experiment_config(load_json_file(path));
}

ordered_json grpo_config_to_json(const GrpoConfig& cfg) {
    return ordered_json{{"eta0", cfg.eta0},
                        {"lambda", cfg.lambda},
                        {"beta", cfg.beta},
                        {"gamma", cfg.gamma},
                        {"iterations", cfg.iterations},
                        {"projection", projection_to_json(cfg.projection)},
                        {"init", init_to_json(cfg.init)},
                        {"adaptive", cfg.adaptive}};
}

ordered_json benchmark_spec_to_json(const BenchmarkSpec& spec) {
    return ordered_json{
        {"num_seen", spec.num_seen},
        {"num_ood", spec.num_ood},
        {"images_per_class", spec.images_per_class},
        {"patches_per_image", spec.patches_per_image},
        {"noise_sigma", spec.noise_sigma},
        {"dims",
         ordered_json{{"d_e", spec.d_e}, {"d_tok", spec.d_tok},
                      {"d_k", spec.d_k}}},
        {"encoder_mode", encoder_mode_name(spec.encoder_mode)},
        {"shots", spec.shots},
        {"support_per_class", spec.support_per_class},
        {"num_distractors", spec.num_distractors},
        {"prototype_spread", spec.prototype_spread},
        {"distractor_spread", spec.distractor_spread},
        {"background_fraction", spec.background_fraction},
        {"background_scale", spec.background_scale},
        {"background_clutter", spec.background_clutter},
        {"attention_gain", spec.attention_gain},
        {"seed", spec.seed}};
}

ordered_json experiment_config_to_json(const ExperimentConfig& cfg) {
    ordered_json variants = ordered_json::array();
    for (AblationVariant v : cfg.variants) variants.push_back(variant_name(v));
    ordered_json formats = ordered_json::array();
    if (cfg.formats.json) formats.push_back("json");
    if (cfg.formats.csv) formats.push_back("csv");
    return ordered_json{
        {"benchmark", benchmark_spec_to_json(cfg.benchmark)},
        {"grpo", grpo_config_to_json(cfg.grpo)},
        {"eval",
         ordered_json{{"shots", cfg.eval_shots},
                      {"aggregation", aggregation_name(cfg.aggregation)},
                      {"variants", variants},
                      {"seeds", cfg.seeds}}},
        {"output", ordered_json{{"dir", cfg.out_dir}, {"formats", formats}}}};
}

ordered_json fixture_to_json(const GeneratedBenchmark& bench) {
    ordered_json encoder{{"mode", encoder_mode_name(bench.encoder.mode())},
                         {"d_tok", bench.encoder.token_dim()},
                         {"d_e", bench.encoder.joint_dim()}};
    encoder["projection"] = bench.encoder.projection()
                                ? mat_to_json(*bench.encoder.projection())
                                : ordered_json(nullptr);
    encoder["hidden_w1"] = bench.encoder.hidden_w1()
                               ? mat_to_json(*bench.encoder.hidden_w1())
                               : ordered_json(nullptr);
    encoder["hidden_w2"] = bench.encoder.hidden_w2()
                               ? mat_to_json(*bench.encoder.hidden_w2())
                               : ordered_json(nullptr);

    ordered_json concepts = ordered_json::array();
    for (const ConceptSpec& c : bench.concepts) {
        ordered_json item{{"id", c.id},
                          {"display_name", c.display_name},
                          {"kind", c.is_seen() ? "seen" : "ood"}};
        item["token_index"] =
            c.token_index ? ordered_json(*c.token_index) : ordered_json(nullptr);
        item["prototype"] = vec_to_json(c.prototype);
        concepts.push_back(std::move(item));
    }

    ordered_json instances = ordered_json::array();
    for (const Instance& inst : bench.instances) {
        instances.push_back(ordered_json{
            {"id", inst.id},
            {"concept_id", inst.concept_id},
            {"split", inst.split == Split::Support ? "support" : "test"},
            {"patches", mat_to_json(inst.patches.matrix())}});
    }

    return ordered_json{
        {"format", kFixtureFormat},
        {"benchmark_spec", benchmark_spec_to_json(bench.spec)},
        {"vocabulary",
         ordered_json{{"token_names", bench.vocab.token_names()},
                      {"embeddings", mat_to_json(bench.vocab.embeddings())}}},
        {"encoder", std::move(encoder)},
        {"attention",
         ordered_json{{"d_k", bench.attention.key_dim()},
                      {"w_q", mat_to_json(bench.attention.w_q())},
                      {"w_k", mat_to_json(bench.attention.w_k())}}},
        {"template",
         ordered_json{{"token_ids", bench.prompt.token_ids()},
                      {"slot_position", bench.prompt.slot_position()}}},
        {"concepts", std::move(concepts)},
        {"instances", std::move(instances)}};
}

GeneratedBenchmark fixture_from_json(const json& root) {
    if (get_string_or(root, "format", "") != kFixtureFormat) {
        throw ConfigError("fixture: unknown or missing format tag");
    }
    json spec_wrapper{{"benchmark", require_node(root, "benchmark_spec")}};
    BenchmarkSpec spec = benchmark_spec_from_json(spec_wrapper);

    const json& vocab_node = require_node(root, "vocabulary");
    std::vector<std::string> names;
    for (const auto& n : require_node(vocab_node, "token_names")) {
        names.push_back(n.get<std::string>());
    }
    VocabularyTable vocab(
        mat_from_json(require_node(vocab_node, "embeddings"),
                      "vocabulary.embeddings"),
        std::move(names));

    const std::string mode = require_string(root, "encoder.mode");
    TextEncoderParams encoder = TextEncoderParams::mean_pool_identity(1);
    if (mode == "mean_pool_identity") {
        encoder = TextEncoderParams::mean_pool_identity(
            require_size(root, "encoder.d_e"));
    } else if (mode == "mean_pool_projected") {
        encoder = TextEncoderParams::mean_pool_projected(mat_from_json(
            require_node(root, "encoder.projection"), "encoder.projection"));
    } else if (mode == "one_hidden_mlp") {
        encoder = TextEncoderParams::one_hidden_mlp(
            mat_from_json(require_node(root, "encoder.hidden_w1"),
                          "encoder.hidden_w1"),
            mat_from_json(require_node(root, "encoder.hidden_w2"),
                          "encoder.hidden_w2"));
    } else {
        throw ConfigError("fixture: unknown encoder mode '" + mode + "'");
    }

    AttentionParams attention(
        mat_from_json(require_node(root, "attention.w_q"), "attention.w_q"),
        mat_from_json(require_node(root, "attention.w_k"), "attention.w_k"));

    std::vector<std::size_t> ids;
    for (const auto& t : require_node(root, "template.token_ids")) {
        ids.push_back(t.get<std::size_t>());
    }
    Template prompt(std::move(ids), require_size(root, "template.slot_position"));

    std::vector<ConceptSpec> concepts;
    for (const auto& c : require_node(root, "concepts")) {
        std::optional<std::size_t> token_index;
        if (!c.at("token_index").is_null()) {
            token_index = c.at("token_index").get<std::size_t>();
        }
        concepts.push_back(
            ConceptSpec{c.at("id").get<int>(),
                        vec_from_json(c.at("prototype"), "concept.prototype"),
                        token_index, c.at("display_name").get<std::string>()});
    }

    std::vector<Instance> instances;
    for (const auto& i : require_node(root, "instances")) {
        const std::string split = i.at("split").get<std::string>();
        if (split != "support" && split != "test") {
            throw ConfigError("fixture: unknown split '" + split + "'");
        }
        instances.push_back(Instance{
            i.at("id").get<int>(),
            PatchFeatures(mat_from_json(i.at("patches"), "instance.patches")),
            i.at("concept_id").get<int>(),
            split == "support" ? Split::Support : Split::Test});
    }

    return GeneratedBenchmark{std::move(spec),     std::move(vocab),
                              std::move(encoder),  std::move(attention),
                              std::move(prompt),   std::move(concepts),
                              std::move(instances)};
}

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string trajectory_csv(const Trajectory& traj) {
    std::ostringstream out;
    out << "t,score,grad_norm,rho,eta,reg_norm\n";
    for (const StepRecord& s : traj.steps) {
        out << s.t << ',' << format_double(s.score) << ','
            << format_double(s.grad_norm) << ',' << format_double(s.rho) << ','
            << format_double(s.eta) << ',' << format_double(s.reg_norm) << '\n';
    }
    return out.str();
}

ordered_json trajectory_json(const Trajectory& traj, const GrpoConfig& config,
                             double final_score, double final_regularizer) {
    ordered_json steps = ordered_json::array();
    for (const StepRecord& s : traj.steps) {
        steps.push_back(ordered_json{{"t", s.t},
                                     {"score", s.score},
                                     {"grad_norm", s.grad_norm},
                                     {"rho", s.rho},
                                     {"eta", s.eta},
                                     {"reg_norm", s.reg_norm}});
    }
    return ordered_json{{"config", grpo_config_to_json(config)},
                        {"z_init", vec_to_json(traj.z_init)},
                        {"z_star", vec_to_json(traj.z_star)},
                        {"final_score", final_score},
                        {"final_regularizer", final_regularizer},
                        {"steps", std::move(steps)}};
}

ordered_json report_json(const EvalReport& report) {
    ordered_json per_class = ordered_json::array();
    for (const PerClassCount& c : report.per_class) {
        per_class.push_back(ordered_json{{"concept_id", c.concept_id},
                                         {"display_name", c.display_name},
                                         {"correct", c.correct},
                                         {"total", c.total}});
    }
    ordered_json out{{"seed", report.seed}};
    out["seen_accuracy"] = report.seen_accuracy
                               ? ordered_json(*report.seen_accuracy)
                               : ordered_json(nullptr);
    out["ood_accuracy"] = report.ood_accuracy
                              ? ordered_json(*report.ood_accuracy)
                              : ordered_json(nullptr);
    out["open_accuracy"] = report.open_accuracy;
    out["seen_total"] = report.seen_total;
    out["ood_total"] = report.ood_total;
    out["per_class"] = std::move(per_class);
    return out;
}

namespace {

void append_metric_rows(std::ostringstream& out, const std::string& method,
                        const std::string& variant, std::size_t shots,
                        const std::vector<const EvalReport*>& reports) {
    std::vector<double> seen;
    std::vector<double> ood;
    std::vector<double> open;
    for (const EvalReport* r : reports) {
        if (r->seen_accuracy) seen.push_back(*r->seen_accuracy);
        if (r->ood_accuracy) ood.push_back(*r->ood_accuracy);
        open.push_back(r->open_accuracy);
    }
    const MetricAggregate s = aggregate_metric(seen);
    const MetricAggregate o = aggregate_metric(ood);
    const MetricAggregate a = aggregate_metric(open);
    out << "mean," << method << ',' << variant << ',' << shots << ','
        << (seen.empty() ? "" : format_double(s.mean)) << ','
        << (ood.empty() ? "" : format_double(o.mean)) << ','
        << format_double(a.mean) << '\n';
    out << "std," << method << ',' << variant << ',' << shots << ','
        << (seen.empty() ? "" : format_double(s.stddev)) << ','
        << (ood.empty() ? "" : format_double(o.stddev)) << ','
        << format_double(a.stddev) << '\n';
}

}  // namespace

ordered_json eval_summary_json(const ExperimentConfig& cfg,
                               AblationVariant variant,
                               const std::vector<SeedReports>& per_seed) {
    ordered_json seeds_out = ordered_json::array();
    std::vector<const EvalReport*> baseline_reports;
    std::vector<const EvalReport*> gtma_reports;
    for (const SeedReports& sr : per_seed) {
        ordered_json item{{"seed", sr.seed},
                          {"baseline", report_json(sr.baseline)}};
        if (sr.gtma) {
            item["gtma"] = report_json(*sr.gtma);
            gtma_reports.push_back(&*sr.gtma);
        }
        baseline_reports.push_back(&sr.baseline);
        seeds_out.push_back(std::move(item));
    }

    auto aggregate_of = [](const std::vector<const EvalReport*>& reports) {
        std::vector<double> seen;
        std::vector<double> ood;
        std::vector<double> open;
        for (const EvalReport* r : reports) {
            if (r->seen_accuracy) seen.push_back(*r->seen_accuracy);
            if (r->ood_accuracy) ood.push_back(*r->ood_accuracy);
            open.push_back(r->open_accuracy);
        }
        ordered_json out;
        out["seen"] = seen.empty() ? ordered_json(nullptr)
                                   : metric_to_json(aggregate_metric(seen));
        out["ood"] = ood.empty() ? ordered_json(nullptr)
                                 : metric_to_json(aggregate_metric(ood));
        out["open"] = metric_to_json(aggregate_metric(open));
        return out;
    };

    ordered_json aggregate{{"baseline", aggregate_of(baseline_reports)}};
    if (!gtma_reports.empty()) {
        aggregate["gtma"] = aggregate_of(gtma_reports);
    }
    return ordered_json{{"config", experiment_config_to_json(cfg)},
                        {"variant", variant_name(variant)},
                        {"shots", cfg.eval_shots},
                        {"per_seed", std::move(seeds_out)},
                        {"aggregate", std::move(aggregate)}};
}

std::string eval_summary_csv(AblationVariant variant, std::size_t shots,
                             const std::vector<SeedReports>& per_seed) {
    std::ostringstream out;
    out << "seed,method,variant,shots,seen_accuracy,ood_accuracy,open_accuracy\n";
    auto write_report = [&](const std::string& seed_label,
                            const std::string& method,
                            const std::string& var_label,
                            const EvalReport& r) {
        out << seed_label << ',' << method << ',' << var_label << ',' << shots
            << ','
            << (r.seen_accuracy ? format_double(*r.seen_accuracy) : "") << ','
            << (r.ood_accuracy ? format_double(*r.ood_accuracy) : "") << ','
            << format_double(r.open_accuracy) << '\n';
    };
    std::vector<const EvalReport*> baseline_reports;
    std::vector<const EvalReport*> gtma_reports;
    for (const SeedReports& sr : per_seed) {
        write_report(std::to_string(sr.seed), "baseline", "", sr.baseline);
        baseline_reports.push_back(&sr.baseline);
        if (sr.gtma) {
            write_report(std::to_string(sr.seed), "gtma",
                         variant_name(variant), *sr.gtma);
            gtma_reports.push_back(&*sr.gtma);
        }
    }
    append_metric_rows(out, "baseline", "", shots, baseline_reports);
    if (!gtma_reports.empty()) {
        append_metric_rows(out, "gtma", variant_name(variant), shots,
                           gtma_reports);
    }
    return out.str();
}

ordered_json ablation_json(const AblationTable& table) {
    ordered_json rows = ordered_json::array();
    for (const AblationRow& row : table.rows) {
        rows.push_back(ordered_json{{"variant", variant_name(row.variant)},
                                    {"seen", metric_to_json(row.seen)},
                                    {"ood", metric_to_json(row.ood)},
                                    {"open", metric_to_json(row.open)},
                                    {"drop_open", row.drop_open},
                                    {"open_per_seed", row.open_per_seed}});
    }
    return ordered_json{
        {"seeds", table.seeds},
        {"shots", table.shots},
        {"baseline",
         ordered_json{{"seen", metric_to_json(table.baseline_seen)},
                      {"ood", metric_to_json(table.baseline_ood)}}},
        {"rows", std::move(rows)}};
}

std::string ablation_csv(const AblationTable& table) {
    std::ostringstream out;
    out << "variant,seen_mean,seen_std,ood_mean,ood_std,open_mean,open_std,"
           "open_ci95_lo,open_ci95_hi,drop_open\n";
    out << "baseline," << format_double(table.baseline_seen.mean) << ','
        << format_double(table.baseline_seen.stddev) << ','
        << format_double(table.baseline_ood.mean) << ','
        << format_double(table.baseline_ood.stddev) << ",,,,,\n";
    for (const AblationRow& row : table.rows) {
        out << variant_name(row.variant) << ','
            << format_double(row.seen.mean) << ','
            << format_double(row.seen.stddev) << ','
            << format_double(row.ood.mean) << ','
            << format_double(row.ood.stddev) << ','
            << format_double(row.open.mean) << ','
            << format_double(row.open.stddev) << ','
            << format_double(row.open.ci95_lo) << ','
            << format_double(row.open.ci95_hi) << ','
            << format_double(row.drop_open) << '\n';
    }
    return out.str();
}

std::string config_hash_hex(const json& canonical_config) {
    const std::string bytes = canonical_config.dump();
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        hash ^= b;
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(hash));
    return buf;
}

ordered_json make_run_manifest(const json& canonical_config,
                               const std::vector<std::uint64_t>& seeds,
                               const std::vector<std::string>& output_paths) {
    std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return ordered_json{{"tool_version", kToolVersion},
                        {"config_hash", config_hash_hex(canonical_config)},
                        {"seeds", seeds},
                        {"created_utc", stamp},
                        {"outputs", output_paths}};
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& contents) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create directory " +
                          path.parent_path().string() + ": " + ec.message());
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << contents;
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    json parsed = json::parse(text, nullptr, false);
    if (parsed.is_discarded()) {
        throw ConfigError("invalid JSON in " + path.string());
    }
    return parsed;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::istringstream in(text);
    std::string token;
    while (std::getline(in, token, ',')) {
        if (token.empty()) {
            throw ConfigError("seed list: empty entry");
        }
        const std::size_t dash = token.find('-');
        try {
            if (dash == std::string::npos) {
                seeds.push_back(std::stoull(token));
            } else {
                const std::uint64_t lo = std::stoull(token.substr(0, dash));
                const std::uint64_t hi = std::stoull(token.substr(dash + 1));
                if (hi < lo) {
                    throw ConfigError("seed list: descending range '" + token +
                                      "'");
                }
                for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
            }
        } catch (const std::invalid_argument&) {
            throw ConfigError("seed list: cannot parse '" + token + "'");
        } catch (const std::out_of_range&) {
            throw ConfigError("seed list: value out of range '" + token + "'");
        }
    }
    if (seeds.empty()) {
        throw ConfigError("seed list: no seeds given");
    }
    return seeds;
}

}  // namespace gtma
