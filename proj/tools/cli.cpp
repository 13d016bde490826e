// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "lim/errors.hpp"
#include "lim/kernels.hpp"
#include "lim/model.hpp"
#include "lim/pipeline.hpp"
#include "lim/recall.hpp"
#include "lim/replay.hpp"
#include "lim/rng.hpp"
#include "lim/synthetic.hpp"
#include "lim/trace.hpp"

namespace lim::cli {

namespace {

constexpr const char* kRecallSchema = "lim.recall.v1";
constexpr const char* kAblateSchema = "lim.ablate.v1";
constexpr const char* kOverlapSchema = "lim.overlap.v1";

struct RunSpec {
    std::string model_config;
    std::string trace;
    std::string policy = "lessismore";
    std::size_t budget = 32;
    double ratio = 0.25;
    std::size_t sinks = 4;
    std::string schedule = "default";
    std::uint64_t seed = 0;
    std::size_t max_new_tokens = 64;
    std::string out;
    std::string format = "csv";
    std::string prompt;
    std::size_t prompt_len = 16;
    std::vector<std::uint32_t> select_layers;
    std::string record_trace;
    std::vector<double> ratios{0.0, 0.25, 0.5, 0.75, 1.0};
    std::string synth_kind = "crafted";
    std::string isa;
};

class UsageError : public Error {
public:
    using Error::Error;
    std::string_view kind() const noexcept override { return "usage"; }
};

std::string num(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

SelectionPolicy make_policy(const RunSpec& spec, PolicyKind kind, double ratio) {
    SelectionPolicy p;
    p.kind = kind;
    p.budget = TokenBudget{spec.budget, ratio, spec.sinks};
    p.seed = spec.seed;
    if (kind != PolicyKind::Full) p.budget.validate();
    return p;
}

PolicyKind policy_kind(const std::string& name) {
    auto k = parse_policy(name);
    if (!k) throw UsageError("unknown policy '" + name + "'");
    return *k;
}

std::vector<std::uint32_t> parse_ids(const std::string& text) {
    std::vector<std::uint32_t> ids;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::uint32_t v = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc{} || ptr != item.data() + item.size()) {
            throw UsageError("bad token id '" + item + "' in --prompt");
        }
        ids.push_back(v);
    }
    return ids;
}

std::vector<std::uint32_t> make_prompt(const RunSpec& spec, const ModelConfig& cfg) {
    if (!spec.prompt.empty()) return parse_ids(spec.prompt);
    SplitMix64 rng(derive_seed(spec.seed, 0x70726f6d7074ull));
    std::vector<std::uint32_t> ids(spec.prompt_len);
    for (auto& id : ids) id = static_cast<std::uint32_t>(rng.below(cfg.vocab_size));
    return ids;
}

std::size_t worker_count() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("LIM_THREADS")) {
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(env, env + std::char_traits<char>::length(env), v);
        if (ec == std::errc{} && v > 0) n = v;
    }
    return n;
}

// Runs fn(i) for i in [0, count) on up to LIM_THREADS workers.
template <typename Fn>
void parallel_cells(std::size_t count, Fn fn) {
    const std::size_t workers = std::min(worker_count(), count);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto body = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        body();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    }
    if (failure) std::rethrow_exception(failure);
}

void emit(const RunSpec& spec, const std::string& text, std::ostream& out) {
    if (spec.out.empty() || spec.out == "-") {
        out << text;
        out.flush();
        if (!out) throw IoError("failed writing report to stdout");
        return;
    }
    std::ofstream f(spec.out, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + spec.out + " for writing");
    f << text;
    f.close();
    if (!f) throw IoError("failed writing " + spec.out);
}

struct RunResult {
    RecallReport report;
    std::vector<std::uint32_t> tokens;
    bool has_tokens = false;
};

std::string recall_csv(const RunResult& r, const RunSpec& spec) {
    std::ostringstream os;
    const auto& rep = r.report;
    const auto cum = rep.cumulative();
    const std::string prefix = rep.policy + "," + std::to_string(rep.budget.total) + "," +
                               num(rep.budget.recency_ratio) + "," + std::to_string(rep.budget.sink_count) + ",";
    os << "# schema=" << kRecallSchema << "\n";
    os << "kind,policy,budget,ratio,sinks,step,seq_len,token,recall,cum_recall,gen_len\n";
    for (std::size_t i = 0; i < rep.steps.size(); ++i) {
        const auto& s = rep.steps[i];
        os << "step," << prefix << s.step << "," << s.seq_len << ",";
        // Step i is decoded from the token generated before it.
        if (r.has_tokens && i + 1 < r.tokens.size()) os << r.tokens[i + 1];
        os << "," << num(s.mean) << "," << num(cum[i]) << ",\n";
    }
    os << "summary," << prefix << ",,," << num(rep.mean_recall()) << "," << num(rep.final_cumulative()) << ","
       << rep.generation_length << "\n";
    (void)spec;
    return os.str();
}

nlohmann::json recall_json_body(const RunResult& r) {
    const auto& rep = r.report;
    const auto cum = rep.cumulative();
    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t i = 0; i < rep.steps.size(); ++i) {
        const auto& s = rep.steps[i];
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& l : s.layers) {
            layers.push_back({{"layer", l.layer}, {"mean", l.mean}, {"heads", l.heads}});
        }
        steps.push_back({{"step", s.step}, {"seq_len", s.seq_len}, {"recall", s.mean}, {"cum_recall", cum[i]},
                         {"layers", layers}});
    }
    nlohmann::json j{{"schema", kRecallSchema},
                     {"policy", rep.policy},
                     {"budget", rep.budget.total},
                     {"ratio", rep.budget.recency_ratio},
                     {"sinks", rep.budget.sink_count},
                     {"steps", steps},
                     {"summary",
                      {{"policy", rep.policy},
                       {"budget", rep.budget.total},
                       {"ratio", rep.budget.recency_ratio},
                       {"gen_len", rep.generation_length},
                       {"mean_recall", rep.mean_recall()},
                       {"final_cum_recall", rep.final_cumulative()}}}};
    if (r.has_tokens) j["tokens"] = r.tokens;
    return j;
}

std::string render_recall(const RunResult& r, const RunSpec& spec) {
    if (spec.format == "json") return recall_json_body(r).dump(2) + "\n";
    return recall_csv(r, spec);
}

RunResult run_generation(const RunSpec& spec, const ModelWeights& model, PolicyKind kind, double ratio,
                         bool record = false, GenerationResult* keep = nullptr) {
    const LayerSchedule schedule = LayerSchedule::parse(spec.schedule, model.config.num_layers);
    DecodeOptions opts;
    opts.policy = make_policy(spec, kind, ratio);
    opts.record_queries = record;
    const auto prompt = make_prompt(spec, model.config);
    GenerationResult g = generate(prompt, model, schedule, opts, spec.max_new_tokens);
    RunResult r{g.report, g.tokens, true};
    if (keep) *keep = std::move(g);
    return r;
}

RunResult run_replay(const RunSpec& spec, PolicyKind kind, double ratio) {
    std::ifstream in(spec.trace, std::ios::binary);
    if (!in) throw IoError("cannot open trace " + spec.trace);
    TraceReader reader(in);
    ReplayOptions opts{make_policy(spec, kind, ratio), spec.select_layers};
    return RunResult{replay_policy(reader, opts), {}, false};
}

void require_source(const RunSpec& spec, bool model_ok, bool trace_ok) {
    const bool has_model = !spec.model_config.empty();
    const bool has_trace = !spec.trace.empty();
    if (has_model == has_trace) {
        throw UsageError("exactly one of --model-config or --trace is required");
    }
    if (has_model && !model_ok) throw UsageError("this subcommand needs --trace");
    if (has_trace && !trace_ok) throw UsageError("this subcommand needs --model-config");
}

void cmd_generate(const RunSpec& spec, std::ostream& out) {
    require_source(spec, true, false);
    const ModelWeights model = build_model(ModelConfig::load(spec.model_config));
    GenerationResult kept{{}, false, {}, DecodeState(model.config)};
    const bool record = !spec.record_trace.empty();
    RunResult r = run_generation(spec, model, policy_kind(spec.policy), spec.ratio, record, &kept);
    if (record) {
        std::vector<std::uint32_t> layers;
        for (std::uint32_t l = 0; l < model.config.num_layers; ++l) layers.push_back(l);
        save_trace(spec.record_trace, trace_from_run(kept.state, model.config, layers));
    }
    emit(spec, render_recall(r, spec), out);
}

void cmd_replay(const RunSpec& spec, std::ostream& out) {
    require_source(spec, false, true);
    emit(spec, render_recall(run_replay(spec, policy_kind(spec.policy), spec.ratio), spec), out);
}

void cmd_ablate(const RunSpec& spec, std::ostream& out) {
    require_source(spec, true, true);
    if (spec.ratios.empty()) throw UsageError("--ratios needs at least one value");
    std::optional<ModelWeights> model;
    if (!spec.model_config.empty()) model = build_model(ModelConfig::load(spec.model_config));
    std::vector<RunResult> cells(spec.ratios.size());
    parallel_cells(cells.size(), [&](std::size_t i) {
        cells[i] = model ? run_generation(spec, *model, PolicyKind::LessIsMore, spec.ratios[i])
                         : run_replay(spec, PolicyKind::LessIsMore, spec.ratios[i]);
    });
    if (spec.format == "json") {
        nlohmann::json curves = nlohmann::json::array();
        for (std::size_t i = 0; i < cells.size(); ++i) {
            curves.push_back({{"ratio", spec.ratios[i]},
                              {"cum_recall", cells[i].report.cumulative()},
                              {"recall", cells[i].report.step_means()},
                              {"final_cum_recall", cells[i].report.final_cumulative()}});
        }
        nlohmann::json j{{"schema", kAblateSchema}, {"budget", spec.budget}, {"sinks", spec.sinks}, {"curves", curves}};
        emit(spec, j.dump(2) + "\n", out);
        return;
    }
    std::ostringstream os;
    os << "# schema=" << kAblateSchema << "\n";
    os << "ratio,budget,sinks,step,seq_len,recall,cum_recall\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& rep = cells[i].report;
        const auto cum = rep.cumulative();
        for (std::size_t s = 0; s < rep.steps.size(); ++s) {
            os << num(spec.ratios[i]) << "," << spec.budget << "," << spec.sinks << "," << rep.steps[s].step << ","
               << rep.steps[s].seq_len << "," << num(rep.steps[s].mean) << "," << num(cum[s]) << "\n";
        }
    }
    emit(spec, os.str(), out);
}

void cmd_overlap(const RunSpec& spec, std::ostream& out) {
    require_source(spec, true, true);
    std::vector<OverlapEntry> entries;
    if (!spec.trace.empty()) {
        std::ifstream in(spec.trace, std::ios::binary);
        if (!in) throw IoError("cannot open trace " + spec.trace);
        TraceReader reader(in);
        entries = overlap_analysis(reader, spec.budget);
    } else {
        const ModelWeights model = build_model(ModelConfig::load(spec.model_config));
        GenerationResult kept{{}, false, {}, DecodeState(model.config)};
        RunSpec full = spec;
        full.schedule = "full";
        run_generation(full, model, PolicyKind::Full, spec.ratio, true, &kept);
        std::vector<std::uint32_t> layers;
        for (std::uint32_t l = 0; l < model.config.num_layers; ++l) layers.push_back(l);
        entries = overlap_analysis(trace_from_run(kept.state, model.config, layers), spec.budget);
    }
    if (spec.format == "csv") {
        std::ostringstream os;
        os << "# schema=" << kOverlapSchema << "\n";
        os << "step,layer,head_a,head_b,jaccard\n";
        for (const auto& e : entries) {
            for (std::size_t a = 0; a < e.jaccard.rows(); ++a) {
                for (std::size_t b = 0; b < e.jaccard.cols(); ++b) {
                    os << e.step << "," << e.layer << "," << a << "," << b << "," << num(e.jaccard(a, b)) << "\n";
                }
            }
        }
        emit(spec, os.str(), out);
        return;
    }
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries) {
        nlohmann::json m = nlohmann::json::array();
        for (std::size_t a = 0; a < e.jaccard.rows(); ++a) {
            m.push_back(std::vector<double>(e.jaccard.row(a).begin(), e.jaccard.row(a).end()));
        }
        arr.push_back({{"step", e.step}, {"layer", e.layer}, {"jaccard", m}});
    }
    nlohmann::json j{{"schema", kOverlapSchema}, {"top_k", spec.budget}, {"entries", arr}};
    emit(spec, j.dump(2) + "\n", out);
}

void cmd_synth(const RunSpec& spec, bool seed_given) {
    if (spec.out.empty() || spec.out == "-") throw UsageError("synth needs --out PATH");
    Trace t;
    if (spec.synth_kind == "crafted") {
        CraftedTraceOptions o;
        if (seed_given) o.seed = spec.seed;
        t = make_crafted_trace(o);
    } else if (spec.synth_kind == "random") {
        RandomTraceOptions o;
        if (seed_given) o.seed = spec.seed;
        t = make_random_trace(o);
    } else {
        throw UsageError("unknown synth kind '" + spec.synth_kind + "'");
    }
    save_trace(spec.out, t);
}

void print_error(std::ostream& err, std::string_view kind, const std::string& message) {
    nlohmann::json j{{"error", {{"kind", kind}, {"message", message}}}};
    err << j.dump() << "\n";
}

void add_common(CLI::App* cmd, RunSpec& spec) {
    cmd->add_option("--model-config", spec.model_config, "Toy model JSON config");
    cmd->add_option("--trace", spec.trace, "LIMTRC01 attention trace");
    cmd->add_option("--policy", spec.policy, "full|lessismore|head2head|randgroup|recency");
    cmd->add_option("--budget", spec.budget, "Token budget K");
    cmd->add_option("--ratio", spec.ratio, "Recency ratio r in [0,1]");
    cmd->add_option("--sinks", spec.sinks, "Always-kept initial tokens");
    cmd->add_option("--schedule", spec.schedule, "default | full | select:L1,L2 | per-layer F/S/P letters");
    cmd->add_option("--seed", spec.seed, "Seed for prompts and randomized policies");
    cmd->add_option("--max-new-tokens", spec.max_new_tokens, "Generation limit");
    cmd->add_option("--out", spec.out, "Output path (stdout if omitted)");
    cmd->add_option("--format", spec.format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--prompt", spec.prompt, "Comma-separated prompt token ids");
    cmd->add_option("--prompt-len", spec.prompt_len, "Length of the seeded random prompt");
    cmd->add_option("--select-layers", spec.select_layers, "Replay: recorded layers that re-select")->delimiter(',');
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunSpec spec;
    CLI::App app{"lim: unified sparse-attention selection toolkit"};
    app.require_subcommand(1);
    app.add_option("--isa", spec.isa, "Force kernel ISA: scalar|avx2|neon");
    auto* gen = app.add_subcommand("generate", "Greedy generation on a toy model with recall instrumentation");
    auto* rep = app.add_subcommand("replay", "Replay a recorded trace through a selection policy");
    auto* abl = app.add_subcommand("ablate", "Sweep the recency ratio");
    auto* ovl = app.add_subcommand("overlap", "Per-head top-K Jaccard overlap");
    auto* syn = app.add_subcommand("synth", "Write a synthetic trace");
    for (auto* c : {gen, rep, abl, ovl}) add_common(c, spec);
    gen->add_option("--record-trace", spec.record_trace, "Also write the run as a trace (all layers)");
    abl->add_option("--ratios", spec.ratios, "Comma-separated ratios")->delimiter(',');
    syn->add_option("--kind", spec.synth_kind, "crafted|random");
    syn->add_option("--seed", spec.seed, "Generator seed");
    syn->add_option("--out", spec.out, "Output trace path")->required();
    ovl->get_option("--format")->default_str("json");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        print_error(err, "usage", e.what());
        return 2;
    }
    try {
        if (!spec.isa.empty()) {
            auto isa = kernels::parse_isa(spec.isa);
            if (!isa) throw UsageError("unknown ISA '" + spec.isa + "'");
            kernels::set_active(*isa);
        }
        if (ovl->parsed() && ovl->count("--format") == 0) spec.format = "json";
        if (gen->parsed()) cmd_generate(spec, out);
        else if (rep->parsed()) cmd_replay(spec, out);
        else if (abl->parsed()) cmd_ablate(spec, out);
        else if (ovl->parsed()) cmd_overlap(spec, out);
        else if (syn->parsed()) cmd_synth(spec, syn->count("--seed") > 0);
    } catch (const UsageError& e) {
        print_error(err, e.kind(), e.what());
        return 2;
    } catch (const Error& e) {
        print_error(err, e.kind(), e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error(err, "internal", e.what());
        return 1;
    }
    return 0;
}

} // namespace lim::cli
