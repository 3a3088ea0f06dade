// prefmix command-line tool.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prefmix/analytics.hpp"
#include "prefmix/arena.hpp"
#include "prefmix/bank.hpp"
#include "prefmix/embed.hpp"
#include "prefmix/profile.hpp"
#include "prefmix/retrieval.hpp"
#include "prefmix/service.hpp"
#include "prefmix/service_http.hpp"
#include "prefmix/sim.hpp"

namespace fs = std::filesystem;
using namespace prefmix;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
std::vector<T> parse_numbers(const std::string& s, const char* field) {
    std::vector<T> out;
    for (const auto& item : split_list(s)) {
        std::istringstream in(item);
        T v{};
        if (!(in >> v) || !in.eof()) fail(ErrorCode::InvalidArgument, "cannot parse '" + item + "'", field);
        out.push_back(v);
    }
    return out;
}

fs::path embeddings_path(const fs::path& bank_dir, const std::string& explicit_path) {
    return explicit_path.empty() ? bank_dir / "embeddings.txt" : fs::path(explicit_path);
}

std::optional<ResidualAdapter> optional_adapter(const fs::path& bank_dir, const std::string& explicit_path) {
    if (!explicit_path.empty()) return load_adapter(explicit_path);
    if (fs::exists(bank_dir / "adapter.txt")) return load_adapter(bank_dir / "adapter.txt");
    return std::nullopt;
}

void emit(const json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream out(out_path);
    if (!out) fail(ErrorCode::Io, "cannot write " + out_path, out_path);
    out << j.dump(2) << '\n';
}

json bank_summary(const DataBank& bank) {
    json j = {{"prompts", bank.prompts().size()},
              {"screens", bank.screens().size()},
              {"pairs", bank.num_pairs()},
              {"designers", bank.num_designers()},
              {"labels", bank.num_labels()},
              {"complete", bank.complete()}};
    if (bank.has_split()) {
        for (auto p : kAllPartitions) j["split"][std::string(to_string(p))] = bank.pairs_in(p).size();
    }
    return j;
}

// Responses for `profile onboard` from "pair_id value" lines.
std::map<std::string, int> read_responses(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string(), path.string());
    std::map<std::string, int> out;
    std::string pair_id;
    int value = 0;
    while (in >> pair_id >> value) out[pair_id] = value;
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Designer-mixture preference elicitation and judging"};
    app.require_subcommand(1);

    // bank
    auto* bank_cmd = app.add_subcommand("bank", "Validate and split a preference bank");
    bank_cmd->require_subcommand(1);
    std::string bank_dir;
    bool allow_sparse = false;
    auto* ingest = bank_cmd->add_subcommand("ingest", "Validate a bank directory and print its summary");
    ingest->add_option("--dir", bank_dir, "Bank directory")->required();
    ingest->add_flag("--sparse", allow_sparse, "Accept missing labels");

    std::string ratios_arg = "0.6,0.2,0.2";
    std::uint64_t seed = 0;
    auto* split = bank_cmd->add_subcommand("split", "Write a screen-grouped stratified split");
    split->add_option("--dir", bank_dir, "Bank directory")->required();
    split->add_option("--ratios", ratios_arg, "train,validation,test");
    split->add_option("--seed", seed, "Shuffle seed");
    split->add_flag("--sparse", allow_sparse, "Accept missing labels");

    // embed
    auto* embed_cmd = app.add_subcommand("embed", "Residual adapter training");
    embed_cmd->require_subcommand(1);
    std::string embeddings_arg, out_path;
    TrainConfig train_cfg;
    auto* train = embed_cmd->add_subcommand("train", "Train an adapter on the bank's train split");
    train->add_option("--bank", bank_dir, "Bank directory")->required();
    train->add_option("--embeddings", embeddings_arg, "Embedding file (default <bank>/embeddings.txt)");
    train->add_option("--out", out_path, "Adapter checkpoint path")->required();
    train->add_option("--lr", train_cfg.learning_rate, "Initial learning rate");
    train->add_option("--eta-min", train_cfg.eta_min, "Final learning rate");
    train->add_option("--t-max", train_cfg.t_max, "Cosine period in epochs");
    train->add_option("--weight-decay", train_cfg.weight_decay, "Decoupled weight decay");
    train->add_option("--batch", train_cfg.batch_size, "Minibatch size");
    train->add_option("--clip", train_cfg.grad_clip, "Gradient norm clip");
    train->add_option("--patience", train_cfg.patience, "Early stopping patience");
    train->add_option("--epochs", train_cfg.max_epochs, "Maximum epochs");
    train->add_option("--margin", train_cfg.margin, "Hinge margin");
    train->add_option("--margin-multiplier", train_cfg.margin_multiplier, "Margin factor for strong labels");
    train->add_option("--seed", train_cfg.seed, "Shuffle seed");

    // profile
    auto* profile_cmd = app.add_subcommand("profile", "Onboarding");
    profile_cmd->require_subcommand(1);
    std::size_t k = 8;
    std::string responder;
    NoiseModel noise;
    auto* onboard = profile_cmd->add_subcommand("onboard", "Run adaptive onboarding and write a profile");
    onboard->add_option("--bank", bank_dir, "Bank directory")->required();
    onboard->add_option("--k", k, "Number of queries");
    onboard->add_option("--responder", responder, "File of 'pair_id value' lines, or 'interactive'")->required();
    onboard->add_option("--out", out_path, "Profile path")->required();
    onboard->add_option("--eps-dir", noise.eps_dir, "Direction flip probability");
    onboard->add_option("--eps-str", noise.eps_str, "Strength flip probability");

    // judge
    auto* judge_cmd = app.add_subcommand("judge", "Personalized scoring");
    judge_cmd->require_subcommand(1);
    std::string pair_arg, pool_arg, profile_path, adapter_arg;
    RetrievalConfig retrieval;
    auto add_judge_options = [&](CLI::App* cmd) {
        cmd->add_option("--bank", bank_dir, "Bank directory")->required();
        cmd->add_option("--profile", profile_path, "Profile file")->required();
        cmd->add_option("--embeddings", embeddings_arg, "Embedding file (default <bank>/embeddings.txt)");
        cmd->add_option("--adapter", adapter_arg, "Adapter checkpoint (default <bank>/adapter.txt if present)");
        cmd->add_option("--neighbors", retrieval.n, "Retrieved neighbors");
        cmd->add_option("--tau", retrieval.tau_align, "Alignment temperature");
        cmd->add_option("--beta", retrieval.beta_retrieval, "Retrieval temperature");
    };
    auto* score = judge_cmd->add_subcommand("score", "Score an ordered screen pair");
    add_judge_options(score);
    score->add_option("--pair", pair_arg, "left,right screen ids")->required();
    auto* rerank = judge_cmd->add_subcommand("rerank", "Rank a pool of screens");
    add_judge_options(rerank);
    rerank->add_option("--pool", pool_arg, "Comma-separated screen ids")->required();

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "Agreement analytics");
    stats_cmd->require_subcommand(1);
    std::string granularity = "both";
    auto* agreement = stats_cmd->add_subcommand("agreement", "Inter-designer agreement report");
    agreement->add_option("--bank", bank_dir, "Bank directory")->required();
    agreement->add_option("--granularity", granularity, "binary, four_way or both");
    agreement->add_option("--out", out_path, "Record file (JSON lines)");
    agreement->add_flag("--sparse", allow_sparse, "Accept missing labels");

    // arena
    auto* arena_cmd = app.add_subcommand("arena", "Arena statistics");
    arena_cmd->require_subcommand(1);
    std::string log_path, unit_arg = "participant";
    std::size_t bootstrap = 1000;
    bool exclude_ties = false;
    auto* fit = arena_cmd->add_subcommand("fit", "Bradley-Terry fit with bootstrap intervals");
    fit->add_option("--log", log_path, "Battle log (JSON lines)")->required();
    fit->add_option("--bootstrap", bootstrap, "Bootstrap replicates");
    fit->add_option("--seed", seed, "Bootstrap seed");
    fit->add_option("--unit", unit_arg, "participant or battle");
    fit->add_flag("--exclude-ties", exclude_ties, "Drop ties instead of half wins");
    fit->add_option("--out", out_path, "Output JSON");

    // sim
    auto* sim_cmd = app.add_subcommand("sim", "Synthetic banks and offline evaluation");
    sim_cmd->require_subcommand(1);
    std::string spec_path, k_arg = "0,1,2,4,8", policy_arg = "eig";
    std::size_t n_seeds = 1;
    auto* gen = sim_cmd->add_subcommand("gen", "Generate a synthetic bank directory");
    gen->add_option("--spec", spec_path, "Spec JSON (defaults when omitted)");
    gen->add_option("--seed", seed, "Generator seed");
    gen->add_option("--ratios", ratios_arg, "Split ratios");
    gen->add_option("--out", out_path, "Output directory")->required();

    auto* lodo = sim_cmd->add_subcommand("lodo", "Leave-one-designer-out evaluation");
    lodo->add_option("--bank", bank_dir, "Bank directory with a split")->required();
    lodo->add_option("--embeddings", embeddings_arg, "Embedding file (default <bank>/embeddings.txt)");
    lodo->add_option("--adapter", adapter_arg, "Adapter checkpoint");
    lodo->add_option("--k", k_arg, "Comma-separated k values");
    lodo->add_option("--policy", policy_arg, "eig, random or both");
    lodo->add_option("--seeds", n_seeds, "Number of seeds for the random policy");
    lodo->add_option("--out", out_path, "Curve CSV path");

    // serve
    std::uint16_t port = 8080;
    std::string host = "127.0.0.1", state_dir;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--port", port, "Port");
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--bank", bank_dir, "Bank directory (default $PREF_BANK_DIR)");
    serve->add_option("--state", state_dir, "Session log directory");

    CLI11_PARSE(app, argc, argv);

    try {
        IngestOptions ingest_opts;
        ingest_opts.allow_sparse = allow_sparse;

        if (ingest->parsed()) {
            std::cout << bank_summary(load_bank_dir(bank_dir, ingest_opts)).dump(2) << '\n';
        } else if (split->parsed()) {
            const auto r = parse_numbers<double>(ratios_arg, "ratios");
            if (r.size() != 3) fail(ErrorCode::InvalidArgument, "ratios needs three values", "ratios");
            const DataBank bank = load_bank_dir(bank_dir, ingest_opts);
            const auto assignment = make_splits(bank, {r[0], r[1], r[2]}, seed);
            write_splits(fs::path(bank_dir) / kSplitsFile, bank, assignment.by_pair);
            json j = bank_summary(bank.with_split(assignment));
            j["stratification_error"] = assignment.stratification_error;
            j["unsatisfiable"] = assignment.unsatisfiable;
            std::cout << j.dump(2) << '\n';
            if (assignment.unsatisfiable) std::cerr << "warning: split ratios could not be met within 0.05\n";
        } else if (train->parsed()) {
            const DataBank bank = load_bank_dir(bank_dir);
            const EmbeddingStore store = load_embeddings(embeddings_path(bank_dir, embeddings_arg));
            store.validate_against(bank);
            const auto result = train_adapter(bank, store, train_cfg);
            save_adapter(out_path, result.adapter, &train_cfg);
            json j = {{"best_epoch", result.best_epoch}, {"best_val_accuracy", result.best_val_accuracy}};
            for (const auto& e : result.history) {
                j["history"].push_back({{"epoch", e.epoch},
                                        {"learning_rate", e.learning_rate},
                                        {"train_loss", e.train_loss},
                                        {"val_accuracy", e.val_accuracy}});
            }
            std::cout << j.dump(2) << '\n';
        } else if (onboard->parsed()) {
            const DataBank bank = load_bank_dir(bank_dir);
            noise.validate();
            const LikelihoodTable table(noise);
            const auto candidates = bank.pairs_in(Partition::Train);
            OnboardingSession session("cli", bank, k);
            Responder respond;
            std::map<std::string, int> answers;
            if (responder == "interactive") {
                respond = [&](std::size_t j) {
                    const auto& p = bank.pairs()[j];
                    std::cout << p.pair_id << ": " << p.left_id << " vs " << p.right_id
                              << "  [2 left much better, 1 left better, -1 right better, -2 right much better] > "
                              << std::flush;
                    int v = 0;
                    if (!(std::cin >> v)) fail(ErrorCode::InvalidArgument, "no response read", "response");
                    return response_from_int(v);
                };
            } else {
                answers = read_responses(responder);
                respond = [&](std::size_t j) {
                    const auto& id = bank.pairs()[j].pair_id;
                    auto it = answers.find(id);
                    if (it == answers.end()) fail(ErrorCode::InvalidArgument, "responder has no answer for '" + id + "'", id);
                    return response_from_int(it->second);
                };
            }
            run_onboarding(session, respond, k, candidates, bank, table);
            save_profile(out_path, make_profile_file(bank, session.pi(), noise, session.history()));
            std::cout << json({{"responses", session.history().size()}, {"entropy", entropy(session.pi())}}).dump(2)
                      << '\n';
        } else if (score->parsed() || rerank->parsed()) {
            const DataBank bank = load_bank_dir(bank_dir);
            const EmbeddingStore store = load_embeddings(embeddings_path(bank_dir, embeddings_arg));
            const auto adapter = optional_adapter(bank_dir, adapter_arg);
            const RetrievalIndex index(bank, store, adapter ? &*adapter : nullptr, retrieval);
            const auto pi = load_profile(profile_path).distribution_for(bank);
            if (score->parsed()) {
                const auto ids = split_list(pair_arg);
                if (ids.size() != 2) fail(ErrorCode::InvalidArgument, "--pair needs two screen ids", "pair");
                const double s = score_pair_for_user(ids[0], ids[1], pi, index);
                const Direction d = predict_direction(s);
                std::cout << json({{"left", ids[0]},
                                   {"right", ids[1]},
                                   {"score", s},
                                   {"preferred", d.side == Side::Left ? ids[0] : ids[1]},
                                   {"tie", d.tie}})
                                 .dump(2)
                          << '\n';
            } else {
                const auto ids = split_list(pool_arg);
                json ranking = json::array();
                for (const auto& r : pointwise_scores(ids, pi, index)) {
                    ranking.push_back({{"screen_id", r.screen_id}, {"score", r.score}, {"rank", r.rank}});
                }
                std::cout << json({{"ranking", ranking}, {"top", ranking.front()["screen_id"]}}).dump(2) << '\n';
            }
        } else if (agreement->parsed()) {
            const DataBank bank = load_bank_dir(bank_dir, ingest_opts);
            const auto report = agreement_report(bank);
            if (granularity != "both") granularity_from_string(granularity);
            write_summary(std::cout, report);
            if (!out_path.empty()) {
                auto records = to_records(report);
                if (granularity != "both") {
                    std::erase_if(records, [&](const json& r) {
                        return r.contains("granularity") && r["granularity"] != granularity;
                    });
                }
                write_jsonl(out_path, records);
            }
        } else if (fit->parsed()) {
            const BattleLog log = load_battle_log(log_path);
            BtOptions opts;
            opts.tie_policy = exclude_ties ? TiePolicy::Exclude : TiePolicy::HalfWin;
            ResampleUnit unit = ResampleUnit::Participant;
            if (unit_arg == "battle") {
                unit = ResampleUnit::Battle;
            } else if (unit_arg != "participant") {
                fail(ErrorCode::InvalidArgument, "unit must be participant or battle", "unit");
            }
            const auto result = analyze_arena(log, bootstrap, seed, unit, opts);
            if (result.fit.disconnected) std::cerr << "warning: comparison graph is disconnected\n";
            emit(to_json(result), out_path);
        } else if (gen->parsed()) {
            SyntheticBankSpec spec;
            if (!spec_path.empty()) {
                std::ifstream in(spec_path);
                if (!in) fail(ErrorCode::Io, "cannot open " + spec_path, spec_path);
                spec = synthetic_spec_from_json(json::parse(in));
            }
            const auto r = parse_numbers<double>(ratios_arg, "ratios");
            if (r.size() != 3) fail(ErrorCode::InvalidArgument, "ratios needs three values", "ratios");
            const auto synth = gen_synthetic_bank(spec, seed);
            const DataBank bank = synth.bank.with_split(make_splits(synth.bank, {r[0], r[1], r[2]}, seed));
            save_bank_dir(bank, out_path);
            save_embeddings(fs::path(out_path) / "embeddings.txt", synth.store);
            std::cout << bank_summary(bank).dump(2) << '\n';
        } else if (lodo->parsed()) {
            const DataBank bank = load_bank_dir(bank_dir);
            const EmbeddingStore store = load_embeddings(embeddings_path(bank_dir, embeddings_arg));
            const auto adapter = optional_adapter(bank_dir, adapter_arg);
            LodoOptions opts;
            opts.k_values = parse_numbers<std::size_t>(k_arg, "k");
            opts.seeds.clear();
            for (std::uint64_t s = 0; s < std::max<std::size_t>(n_seeds, 1); ++s) opts.seeds.push_back(s);
            std::vector<QueryPolicy> policies;
            if (policy_arg == "both") {
                policies = {QueryPolicy::Eig, QueryPolicy::Random};
            } else {
                policies = {policy_from_string(policy_arg)};
            }
            EvalResult all;
            json summary = json::array();
            for (auto policy : policies) {
                opts.policy = policy;
                auto result = lodo_eval(bank, store, adapter ? &*adapter : nullptr, opts);
                for (const auto& c : result.curve) {
                    summary.push_back({{"policy", to_string(policy)},
                                       {"k", c.k},
                                       {"mean_accuracy", c.mean_accuracy},
                                       {"mean_entropy", c.mean_entropy}});
                }
                all.rows.insert(all.rows.end(), result.rows.begin(), result.rows.end());
            }
            if (!out_path.empty()) {
                std::ofstream out(out_path);
                if (!out) fail(ErrorCode::Io, "cannot write " + out_path, out_path);
                write_curves(out, all);
            }
            std::cout << summary.dump(2) << '\n';
        } else if (serve->parsed()) {
            if (bank_dir.empty()) {
                if (const char* env = std::getenv("PREF_BANK_DIR")) bank_dir = env;
            }
            ServiceConfig config;
            if (const char* token = std::getenv("PREF_API_TOKEN")) config.api_token = token;
            config.state_dir = state_dir;
            std::unique_ptr<PreferenceService> service;
            if (bank_dir.empty()) {
                std::cerr << "warning: no bank directory; endpoints report bank_unavailable\n";
                service = std::make_unique<PreferenceService>(config);
            } else {
                service = std::make_unique<PreferenceService>(load_bank_context(bank_dir), config);
            }
            httplib::Server server;
            mount_routes(server, *service);
            std::cerr << "listening on " << host << ':' << port << '\n';
            if (!server.listen(host, port)) fail(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
        }
    } catch (const Error& e) {
        std::cerr << "error[" << to_string(e.code()) << "]: " << e.what();
        if (!e.field().empty()) std::cerr << " (" << e.field() << ')';
        std::cerr << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
