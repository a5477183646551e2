#include "cfloop/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "cfloop/error.hpp"
#include "cfloop/rng.hpp"

namespace cfloop {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Scenarios

Scenario parse_scenario(const json& j, const FeatureSchema& schema) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "scenario must be a JSON object");
    Scenario s;
    try {
        s.name = j.value("name", std::string{"scenario"});
        s.dataset = j.value("dataset", schema.name());
        if (j.contains("method")) s.method = parse_method(j.at("method").get<std::string>());
        if (j.contains("strategy")) s.strategy = parse_strategy(j.at("strategy").get<std::string>());
        if (j.contains("runs")) s.runs = j.at("runs").get<std::size_t>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("params")) {
            (void)params_from_json(j.at("params"));  // validate early
            s.params = j.at("params");
        }
        const auto& seq = j.at("sequence");
        if (!seq.is_array()) throw Error(ErrorCode::InvalidArgument, "scenario sequence must be an array of batches");
        for (const auto& batch : seq) s.sequence.push_back(batch_from_json(batch, schema));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("malformed scenario: {}", e.what()));
    }
    if (s.runs < 1) throw Error(ErrorCode::InvalidArgument, "scenario runs must be at least 1");
    if (s.sequence.empty()) throw Error(ErrorCode::InvalidArgument, "scenario sequence is empty");
    (void)final_constraints(s, schema);  // every step must apply cleanly
    return s;
}

Scenario load_scenario(const std::filesystem::path& path, const FeatureSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open scenario '{}'", path.string()));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("scenario '{}' is not valid JSON: {}", path.string(), e.what()));
    }
    return parse_scenario(j, schema);
}

ConstraintSet final_constraints(const Scenario& s, const FeatureSchema& schema) {
    ConstraintSet c;
    for (const auto& batch : s.sequence) c = apply_batch(c, batch, schema);
    return c;
}

// ---------------------------------------------------------------------------
// Workspace

Workspace make_workspace(Dataset full, std::shared_ptr<const Classifier> model, double default_ratio,
                         std::uint64_t default_seed) {
    if (!model) throw Error(ErrorCode::InvalidArgument, "workspace needs a model");
    const double ratio = model->metadata.split_ratio.value_or(default_ratio);
    const std::uint64_t split_seed = model->metadata.split_seed.value_or(default_seed);
    Workspace ws;
    std::tie(ws.train, ws.test) = train_test_split(full, ratio, split_seed);
    ws.full = std::move(full);
    ws.model = std::move(model);
    ws.context = std::make_shared<const ExplainContext>(ws.train, ws.model);
    ws.negatives = negative_indices(*ws.model, ws.test);
    return ws;
}

Workspace open_workspace(const std::filesystem::path& csv, const std::filesystem::path& schema,
                         const std::filesystem::path& model) {
    return make_workspace(load_dataset(csv, schema), load_model(model));
}

unsigned default_workers() {
    if (const char* env = std::getenv("CFLOOP_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<std::size_t> select_instances(const Workspace& ws, const BenchOptions& opts, std::uint64_t seed) {
    std::vector<std::size_t> ids = ws.negatives;
    if (opts.max_instances && ids.size() > *opts.max_instances) {
        Rng rng(derive_seed({seed, 0x73656c656374ULL}));
        std::shuffle(ids.begin(), ids.end(), rng);
        ids.resize(*opts.max_instances);
        std::sort(ids.begin(), ids.end());
    }
    return ids;
}

// ---------------------------------------------------------------------------
// Execution

BenchRun run_arms(const Workspace& ws, const std::vector<Arm>& arms, const std::vector<std::size_t>& instances,
                  std::size_t runs, std::uint64_t seed, const BenchOptions& opts) {
    struct Task {
        std::size_t arm, run, instance;
    };
    // arms interleaved per (run, instance) so they see the same machine load
    std::vector<Task> tasks;
    for (std::size_t r = 0; r < runs; ++r)
        for (auto id : instances)
            for (std::size_t a = 0; a < arms.size(); ++a) tasks.push_back({a, r, id});

    std::vector<std::vector<StepRecord>> results(tasks.size());
    std::vector<std::string> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t t = next++; t < tasks.size(); t = next++) {
            const auto& task = tasks[t];
            const auto& arm = arms[task.arm];
            const std::uint64_t run_seed = seed + task.run;
            try {
                GaParams params = opts.params;
                params.seed = derive_seed({run_seed, task.instance});
                const auto steps = run_sequence(ws.context, ws.test.rows.at(task.instance), arm.sequence, params,
                                                arm.method, arm.strategy, opts.init);
                for (std::size_t s = 0; s < steps.size(); ++s) {
                    RunMetrics m = steps[s].metrics;
                    if (!opts.timing) m.elapsed_ms = 0.0;
                    results[t].push_back({ws.name(), arm.label, run_seed, task.instance, s, m});
                }
            } catch (const std::exception& e) {
                errors[t] = fmt::format("{} seed {} instance {}: {}", arm.label, run_seed, task.instance, e.what());
            }
        }
    };
    const unsigned n_workers = std::max(1u, std::min<unsigned>(opts.workers ? opts.workers : default_workers(),
                                                               static_cast<unsigned>(std::max<std::size_t>(1, tasks.size()))));
    if (n_workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    BenchRun out;
    for (std::size_t a = 0; a < arms.size(); ++a)
        for (std::size_t t = 0; t < tasks.size(); ++t)
            if (tasks[t].arm == a) out.records.insert(out.records.end(), results[t].begin(), results[t].end());
    for (auto& e : errors)
        if (!e.empty()) out.errors.push_back(std::move(e));
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string format_optional(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string{}; }

std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

std::string metrics_csv(const std::vector<StepRecord>& records) {
    std::string out(kMetricsHeader);
    out += '\n';
    for (const auto& r : records) {
        out += fmt::format("{},{},{},{},{},{:.3f},{},{},{},{}\n", r.dataset, r.method, r.seed, r.instance_id, r.step,
                           r.metrics.elapsed_ms, r.metrics.generations, r.metrics.found ? 1 : 0,
                           format_optional(r.metrics.proximity), format_optional(r.metrics.sparsity));
    }
    return out;
}

std::vector<StepRecord> parse_metrics_csv(std::string_view text) {
    std::vector<StepRecord> out;
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader)
        throw Error(ErrorCode::MissingColumn, "metrics CSV header does not match");
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 10) throw DataError(ErrorCode::BadNumber, "metrics row has the wrong field count", row);
        try {
            StepRecord r;
            r.dataset = f[0];
            r.method = f[1];
            r.seed = std::stoull(f[2]);
            r.instance_id = std::stoull(f[3]);
            r.step = std::stoull(f[4]);
            r.metrics.elapsed_ms = std::stod(f[5]);
            r.metrics.generations = std::stoull(f[6]);
            r.metrics.found = f[7] == "1";
            if (!f[8].empty()) r.metrics.proximity = std::stod(f[8]);
            if (!f[9].empty()) r.metrics.sparsity = std::stod(f[9]);
            out.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw DataError(ErrorCode::BadNumber, "unparseable number in metrics CSV", row);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::optional<Summary> maybe_summary(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    return summarize(v);
}

}  // namespace

std::vector<ArmSummary> summarize_arms(const std::vector<StepRecord>& records, const std::vector<std::string>& labels) {
    // label -> run seed -> instance -> steps
    std::map<std::string, std::map<std::uint64_t, std::map<std::size_t, std::vector<const StepRecord*>>>> grouped;
    for (const auto& r : records) grouped[r.method][r.seed][r.instance_id].push_back(&r);

    std::vector<ArmSummary> out;
    for (const auto& label : labels) {
        ArmSummary a;
        a.label = label;
        const auto it = grouped.find(label);
        if (it == grouped.end()) {
            out.push_back(std::move(a));
            continue;
        }
        a.runs = it->second.size();
        for (const auto& [seed, by_instance] : it->second) {
            a.instances = std::max(a.instances, by_instance.size());
            std::vector<double> time, gens, gens_cum, prox, spars;
            std::size_t found = 0;
            for (const auto& [id, steps_in] : by_instance) {
                auto steps = steps_in;
                std::sort(steps.begin(), steps.end(), [](auto* x, auto* y) { return x->step < y->step; });
                double t = 0.0, g = 0.0;
                for (const auto* s : steps) {
                    t += s->metrics.elapsed_ms;
                    g += static_cast<double>(s->metrics.generations);
                }
                time.push_back(t);
                gens.push_back(g / static_cast<double>(steps.size()));
                gens_cum.push_back(g);
                const auto& last = steps.back()->metrics;
                if (last.found) {
                    ++found;
                    if (last.proximity) prox.push_back(*last.proximity);
                    if (last.sparsity) spars.push_back(*last.sparsity);
                }
            }
            a.time_ms.push_back(mean_of(time));
            a.gens.push_back(mean_of(gens));
            a.gens_cum.push_back(mean_of(gens_cum));
            a.cf_rate.push_back(100.0 * static_cast<double>(found) / static_cast<double>(by_instance.size()));
            if (!prox.empty()) a.proximity.push_back(mean_of(prox));
            if (!spars.empty()) a.sparsity.push_back(mean_of(spars));
        }
        a.time_summary = summarize(a.time_ms);
        a.gens_summary = summarize(a.gens);
        a.gens_cum_summary = summarize(a.gens_cum);
        a.cf_summary = summarize(a.cf_rate);
        a.proximity_summary = maybe_summary(a.proximity);
        a.sparsity_summary = maybe_summary(a.sparsity);
        out.push_back(std::move(a));
    }
    return out;
}

namespace {

std::string cell(const Summary& s, int precision) { return fmt::format("{:.{}f} ± {:.{}f}", s.mean, precision, s.std, precision); }

std::string cell(const std::optional<Summary>& s, int precision) { return s ? cell(*s, precision) : "n/a"; }

std::string pcell(const std::optional<double>& p) { return p ? fmt::format("{:.4g}", *p) : "n/a"; }

std::optional<double> maybe_welch(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) return std::nullopt;
    return welch_t_test(a, b);
}

}  // namespace

std::string markdown_table(const std::vector<ArmSummary>& arms, bool with_gens) {
    std::string out = with_gens ? "| Method | Time (ms) | Gens | Gens (cum.) | CFs (%) | Proximity | Sparsity |\n"
                                  "|---|---|---|---|---|---|---|\n"
                                : "| Method | Time (ms) | CFs (%) | Proximity | Sparsity |\n"
                                  "|---|---|---|---|---|\n";
    for (const auto& a : arms) {
        if (a.runs == 0) {
            out += fmt::format("| {} | no runs |\n", a.label);
            continue;
        }
        if (with_gens)
            out += fmt::format("| {} | {} | {} | {} | {} | {} | {} |\n", a.label, cell(a.time_summary, 2),
                               cell(a.gens_summary, 2), cell(a.gens_cum_summary, 2), cell(a.cf_summary, 2),
                               cell(a.proximity_summary, 4), cell(a.sparsity_summary, 4));
        else
            out += fmt::format("| {} | {} | {} | {} | {} |\n", a.label, cell(a.time_summary, 2), cell(a.cf_summary, 2),
                               cell(a.proximity_summary, 4), cell(a.sparsity_summary, 4));
    }
    return out;
}

PValues compare_arms(const ArmSummary& a, const ArmSummary& b) {
    return {maybe_welch(a.time_ms, b.time_ms), maybe_welch(a.gens, b.gens), maybe_welch(a.cf_rate, b.cf_rate),
            maybe_welch(a.proximity, b.proximity), maybe_welch(a.sparsity, b.sparsity)};
}

std::string pvalue_table(const ArmSummary& a, const ArmSummary& b, const PValues& p) {
    std::string out = fmt::format("| Metric | {} | {} | p-value |\n|---|---|---|---|\n", a.label, b.label);
    out += fmt::format("| Time (ms) | {} | {} | {} |\n", cell(a.time_summary, 2), cell(b.time_summary, 2), pcell(p.time));
    out += fmt::format("| Gens | {} | {} | {} |\n", cell(a.gens_summary, 2), cell(b.gens_summary, 2), pcell(p.gens));
    out += fmt::format("| CFs (%) | {} | {} | {} |\n", cell(a.cf_summary, 2), cell(b.cf_summary, 2), pcell(p.cf_rate));
    out += fmt::format("| Proximity | {} | {} | {} |\n", cell(a.proximity_summary, 4), cell(b.proximity_summary, 4),
                       pcell(p.proximity));
    out += fmt::format("| Sparsity | {} | {} | {} |\n", cell(a.sparsity_summary, 4), cell(b.sparsity_summary, 4),
                       pcell(p.sparsity));
    return out;
}

// ---------------------------------------------------------------------------
// Commands

TrainReport cmd_train(const Dataset& full, const TrainOptions& opts) {
    auto [train, test] = train_test_split(full, opts.split_ratio, opts.split_seed);
    TrainReport r;
    r.model = train_random_forest(train, opts.forest, opts.seed, opts.workers ? opts.workers : default_workers());
    r.model->metadata.training_seed = opts.seed;
    r.model->metadata.split_ratio = opts.split_ratio;
    r.model->metadata.split_seed = opts.split_seed;
    r.rows = full.size();
    r.numeric = full.schema.numeric_count();
    r.categorical = full.schema.size() - r.numeric;
    r.train_rows = train.size();
    r.test_rows = test.size();
    r.train_accuracy = accuracy(*r.model, train);
    r.test_accuracy = accuracy(*r.model, test);
    r.negatives = negative_indices(*r.model, test).size();
    r.markdown = fmt::format(
        "| Dataset | Rows | Categorical | Numerical | Train | Test | Train acc. | Test acc. | Negatives |\n"
        "|---|---|---|---|---|---|---|---|---|\n"
        "| {} | {} | {} | {} | {} | {} | {:.4f} | {:.4f} | {} |\n",
        full.schema.name(), r.rows, r.categorical, r.numeric, r.train_rows, r.test_rows, r.train_accuracy,
        r.test_accuracy, r.negatives);
    return r;
}

namespace {

BenchOptions with_scenario_params(const BenchOptions& opts, const Scenario& sc) {
    BenchOptions out = opts;
    if (sc.params) out.params = params_from_json(*sc.params, opts.params);
    return out;
}

CommandOutput finish(const std::vector<Arm>& arms, BenchRun run, bool with_gens) {
    std::vector<std::string> labels;
    for (const auto& a : arms) labels.push_back(a.label);
    CommandOutput out;
    out.summaries = summarize_arms(run.records, labels);
    out.csv = metrics_csv(run.records);
    out.markdown = markdown_table(out.summaries, with_gens);
    out.errors = std::move(run.errors);
    return out;
}

}  // namespace

CommandOutput cmd_explain(const Workspace& ws, const Scenario& sc, const std::vector<UpdateMethod>& methods,
                          const BenchOptions& opts) {
    const auto eff = with_scenario_params(opts, sc);
    std::vector<Arm> arms;
    for (auto m : methods) arms.push_back({std::string(to_string(m)), sc.sequence, m, sc.strategy});
    return finish(arms, run_arms(ws, arms, select_instances(ws, eff, sc.seed), sc.runs, sc.seed, eff), true);
}

CommandOutput cmd_warmstart_ablation(const Workspace& ws, const Scenario& sc, const BenchOptions& opts) {
    const auto eff = with_scenario_params(opts, sc);
    const std::vector<Arm> arms{{"fix", sc.sequence, UpdateMethod::Incremental, WarmStartStrategy::FixViolators},
                                {"random", sc.sequence, UpdateMethod::Incremental, WarmStartStrategy::RandomRestart}};
    auto out = finish(arms, run_arms(ws, arms, select_instances(ws, eff, sc.seed), sc.runs, sc.seed, eff), true);
    out.pvalues = compare_arms(out.summaries[0], out.summaries[1]);
    out.markdown += "\n" + pvalue_table(out.summaries[0], out.summaries[1], *out.pvalues);
    return out;
}

std::vector<Ordering> constraint_orderings(const ConstraintSet& pool) {
    UpdateBatch imm, rng, dir;
    for (const auto& [feature, c] : pool) {
        auto u = ConstraintUpdate::add(feature, c);
        switch (type_of(c)) {
            case ConstraintType::Immutable: imm.push_back(u); break;
            case ConstraintType::Range: rng.push_back(u); break;
            case ConstraintType::Direction: dir.push_back(u); break;
        }
    }
    return {{"I-R-D", {imm, rng, dir}}, {"R-I-D", {rng, imm, dir}}, {"D-I-R", {dir, imm, rng}}};
}

CommandOutput cmd_ordering(const Workspace& ws, const Scenario& sc, const BenchOptions& opts) {
    const auto eff = with_scenario_params(opts, sc);
    const auto& schema = ws.full.schema;
    const auto pool = final_constraints(sc, schema);
    std::vector<Arm> arms;
    for (auto& o : constraint_orderings(pool)) {
        ConstraintSet end;
        for (const auto& b : o.sequence) end = apply_batch(end, b, schema);
        if (!(end == pool)) throw Error(ErrorCode::InvalidState, fmt::format("ordering {} changes the final set", o.label));
        arms.push_back({o.label, std::move(o.sequence), sc.method, sc.strategy});
    }
    return finish(arms, run_arms(ws, arms, select_instances(ws, eff, sc.seed), sc.runs, sc.seed, eff), false);
}

CommandOutput cmd_single_constraint(const Workspace& ws, std::size_t feature, const SingleConstraintOptions& sc,
                                    const BenchOptions& opts) {
    const auto& schema = ws.full.schema;
    if (feature >= schema.size())
        throw Error(ErrorCode::UnknownFeature, fmt::format("feature index {} outside schema", feature));
    const auto& spec = schema[feature];
    if (!spec.is_numeric())
        throw Error(ErrorCode::IncompatibleConstraint,
                    fmt::format("single-constraint analysis needs a numeric feature, '{}' is categorical", spec.name));
    const double span = spec.hi - spec.lo;
    const Range range = sc.range.value_or(Range{spec.lo + 0.25 * span, spec.hi - 0.25 * span});
    const std::vector<Arm> arms{
        {"none", {}, sc.method, WarmStartStrategy::FixViolators},
        {"immutable", {{ConstraintUpdate::add(feature, Immutable{})}}, sc.method, WarmStartStrategy::FixViolators},
        {"range", {{ConstraintUpdate::add(feature, range)}}, sc.method, WarmStartStrategy::FixViolators},
        {"direction", {{ConstraintUpdate::add(feature, Direction{sc.sense})}}, sc.method,
         WarmStartStrategy::FixViolators}};
    for (const auto& a : arms)
        for (const auto& b : a.sequence) (void)apply_batch({}, b, schema);
    return finish(arms, run_arms(ws, arms, select_instances(ws, opts, sc.seed), sc.runs, sc.seed, opts), false);
}

}  // namespace cfloop
