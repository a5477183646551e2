#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cfloop/bench.hpp"
#include "cfloop/error.hpp"
#include "cfloop/service.hpp"
#include "cfloop/synthetic.hpp"

namespace fs = std::filesystem;
using namespace cfloop;

namespace {

struct Common {
    std::string data, schema, model, scenario, out, params_file, init = "knn";
    std::optional<std::size_t> runs;
    std::optional<std::uint64_t> seed;
    std::size_t max_instances = kDefaultMaxInstances;
    bool all_instances = false;
    bool no_timing = false;
    std::optional<std::string> method, strategy;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write '{}'", path.string()));
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open '{}'", path.string()));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void add_workspace_flags(CLI::App* cmd, Common& c) {
    cmd->add_option("--data", c.data, "Dataset CSV")->required();
    cmd->add_option("--schema", c.schema, "Schema JSON sidecar")->required();
    cmd->add_option("--model", c.model, "Model file written by `train`")->required();
}

void add_bench_flags(CLI::App* cmd, Common& c) {
    cmd->add_option("--runs", c.runs, "Runs per instance (overrides the scenario)");
    cmd->add_option("--seed", c.seed, "Master seed (overrides the scenario)");
    cmd->add_option("--max-instances", c.max_instances, "Cap on explained instances, subsampled with the seed");
    cmd->add_flag("--all-instances", c.all_instances, "Explain every negative test instance");
    cmd->add_option("--out", c.out, "Per-run CSV path; the table is also written next to it as .md");
    cmd->add_flag("--no-timing", c.no_timing, "Write elapsed_ms as 0 for byte-stable output");
    cmd->add_option("--params", c.params_file, "JSON file with GA parameter overrides");
    cmd->add_option("--init", c.init, "Population initialization: knn|synthetic")
        ->check(CLI::IsMember({"knn", "synthetic"}));
}

BenchOptions bench_options(const Common& c) {
    BenchOptions o;
    if (c.all_instances) o.max_instances.reset();
    else o.max_instances = c.max_instances;
    o.timing = !c.no_timing;
    o.init = parse_init_method(c.init);
    if (!c.params_file.empty()) o.params = params_from_json(nlohmann::json::parse(read_text(c.params_file)));
    return o;
}

Scenario scenario_for(const Common& c, const Workspace& ws) {
    Scenario sc = load_scenario(c.scenario, ws.full.schema);
    if (c.runs) sc.runs = *c.runs;
    if (c.seed) sc.seed = *c.seed;
    if (c.strategy) sc.strategy = parse_strategy(*c.strategy);
    if (c.method && *c.method != "both") sc.method = parse_method(*c.method);
    if (sc.runs < 1) throw Error(ErrorCode::InvalidArgument, "--runs must be at least 1");
    return sc;
}

int emit(const Common& c, const CommandOutput& out) {
    std::cout << out.markdown;
    if (!c.out.empty()) {
        write_text(c.out, out.csv);
        fs::path md = c.out;
        md.replace_extension(".md");
        write_text(md, out.markdown);
    }
    for (const auto& e : out.errors) std::cerr << "run error: " << e << '\n';
    return out.errors.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Incremental counterfactual search under user-editable constraints"};
    app.require_subcommand(1);
    Common c;

    // train
    auto* train = app.add_subcommand("train", "Train a random forest and report split statistics");
    TrainOptions topts;
    std::string model_out;
    train->add_option("--data", c.data, "Dataset CSV")->required();
    train->add_option("--schema", c.schema, "Schema JSON sidecar")->required();
    train->add_option("--out", model_out, "Model output path")->required();
    train->add_option("--seed", topts.seed, "Training seed");
    train->add_option("--split-ratio", topts.split_ratio, "Training fraction");
    train->add_option("--split-seed", topts.split_seed, "Split seed");
    train->add_option("--trees", topts.forest.num_trees, "Number of trees");
    train->add_option("--max-depth", topts.forest.max_depth, "Maximum tree depth");
    train->add_option("--min-leaf", topts.forest.min_leaf, "Minimum leaf size");

    // explain
    auto* explain = app.add_subcommand("explain", "Run a constraint scenario over the negative test instances");
    add_workspace_flags(explain, c);
    explain->add_option("--scenario", c.scenario, "Scenario JSON")->required();
    explain->add_option("--method", c.method, "baseline|incremental|both (default: scenario)")
        ->check(CLI::IsMember({"baseline", "incremental", "both"}));
    explain->add_option("--strategy", c.strategy, "Warm start: fix|random")->check(CLI::IsMember({"fix", "random"}));
    add_bench_flags(explain, c);

    auto* warm = app.add_subcommand("warmstart", "Compare violator fixing against random restarts");
    add_workspace_flags(warm, c);
    warm->add_option("--scenario", c.scenario, "Scenario JSON")->required();
    add_bench_flags(warm, c);

    auto* ordering = app.add_subcommand("ordering", "Compare I-R-D, R-I-D and D-I-R orderings");
    add_workspace_flags(ordering, c);
    ordering->add_option("--scenario", c.scenario, "Scenario whose final constraint set forms the pool")->required();
    ordering->add_option("--method", c.method, "baseline|incremental")
        ->check(CLI::IsMember({"baseline", "incremental"}));
    ordering->add_option("--strategy", c.strategy, "Warm start: fix|random")->check(CLI::IsMember({"fix", "random"}));
    add_bench_flags(ordering, c);

    auto* single = app.add_subcommand("single-constraint", "One constraint type at a time on a single feature");
    add_workspace_flags(single, c);
    std::string feature, direction = "increase";
    std::optional<double> range_lo, range_hi;
    single->add_option("--feature", feature, "Numeric feature name")->required();
    single->add_option("--range-lo", range_lo, "Range lower bound (default: 25th percent of the domain)");
    single->add_option("--range-hi", range_hi, "Range upper bound (default: 75th percent of the domain)");
    single->add_option("--direction", direction, "increase|decrease")->check(CLI::IsMember({"increase", "decrease"}));
    single->add_option("--method", c.method, "baseline|incremental")
        ->check(CLI::IsMember({"baseline", "incremental"}));
    add_bench_flags(single, c);

    auto* serve = app.add_subcommand("serve", "Serve interactive sessions over HTTP/JSON");
    ServiceOptions sopts;
    add_workspace_flags(serve, c);
    serve->add_option("--host", sopts.host, "Bind address");
    serve->add_option("--port", sopts.port, "Port");
    serve->add_option("--ttl", sopts.ttl_seconds, "Idle session lifetime in seconds");
    serve->add_option("--cors-origin", sopts.cors_origin, "Value of Access-Control-Allow-Origin");

    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and its schema");
    std::string kind = "blobs", out_dir = ".", name;
    std::size_t n = 2000, d = 8;
    std::uint64_t synth_seed = 0;
    double delta = 1.0;
    synth->add_option("--kind", kind, "blobs|xor")->check(CLI::IsMember({"blobs", "xor"}));
    synth->add_option("-n,--rows", n, "Row count");
    synth->add_option("-d,--dims", d, "Feature count (blobs)");
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--delta", delta, "Blob centre offset per axis");
    synth->add_option("--out-dir", out_dir, "Output directory");
    synth->add_option("--name", name, "File stem (default: kind)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            const auto full = load_dataset(c.data, c.schema);
            const auto report = cmd_train(full, topts);
            save_model(*report.model, model_out);
            std::cout << report.markdown;
            return 0;
        }
        if (synth->parsed()) {
            const Dataset ds = kind == "xor" ? make_xor(n, synth_seed) : make_blobs(n, d, synth_seed, delta);
            if (name.empty()) name = kind;
            fs::create_directories(out_dir);
            write_csv(ds, fs::path(out_dir) / (name + ".csv"));
            write_text(fs::path(out_dir) / (name + ".schema.json"), ds.schema.to_json().dump(2) + "\n");
            std::cout << fmt::format("wrote {} rows to {}\n", ds.size(), (fs::path(out_dir) / (name + ".csv")).string());
            return 0;
        }

        const auto ws = open_workspace(c.data, c.schema, c.model);
        if (serve->parsed()) {
            Service service(ws, sopts);
            return service.listen();
        }
        const auto opts = bench_options(c);
        if (explain->parsed()) {
            const auto sc = scenario_for(c, ws);
            std::vector<UpdateMethod> methods;
            if (c.method && *c.method == "both") methods = {UpdateMethod::Baseline, UpdateMethod::Incremental};
            else methods = {sc.method};
            return emit(c, cmd_explain(ws, sc, methods, opts));
        }
        if (warm->parsed()) return emit(c, cmd_warmstart_ablation(ws, scenario_for(c, ws), opts));
        if (ordering->parsed()) return emit(c, cmd_ordering(ws, scenario_for(c, ws), opts));
        if (single->parsed()) {
            const auto idx = ws.full.schema.index_of(feature);
            if (!idx) throw Error(ErrorCode::UnknownFeature, fmt::format("unknown feature '{}'", feature));
            SingleConstraintOptions so;
            if (range_lo || range_hi) {
                const auto& spec = ws.full.schema[*idx];
                so.range = Range{range_lo.value_or(spec.lo), range_hi.value_or(spec.hi)};
            }
            so.sense = direction == "decrease" ? Sense::DecreaseOnly : Sense::IncreaseOnly;
            if (c.runs) so.runs = *c.runs;
            if (c.seed) so.seed = *c.seed;
            if (c.method) so.method = parse_method(*c.method);
            return emit(c, cmd_single_constraint(ws, *idx, so, opts));
        }
    } catch (const DataError& e) {
        std::cerr << fmt::format("error [{}]: {}", to_string(e.code()), e.what());
        if (e.row()) std::cerr << fmt::format(" (row {})", *e.row());
        if (e.column()) std::cerr << fmt::format(" (column {})", *e.column());
        std::cerr << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << fmt::format("error [{}]: {}\n", to_string(e.code()), e.what());
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
