#pragma once
// Onboarding service: sessions over a shared read-only bank, persisted as
// append-only response logs, with JSON request and response bodies.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "prefmix/bank.hpp"
#include "prefmix/embed.hpp"
#include "prefmix/error.hpp"
#include "prefmix/profile.hpp"
#include "prefmix/retrieval.hpp"

namespace prefmix {

struct ApiError {
    std::string code;
    std::string message;
    std::string field;
    int status = 500;

    json to_json() const {
        json j = {{"code", code}, {"message", message}};
        if (!field.empty()) j["field"] = field;
        return {{"error", j}};
    }
};

inline int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::Unauthorized: return 401;
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownPair:
    case ErrorCode::UnknownScreen:
    case ErrorCode::MissingScreen: return 404;
    case ErrorCode::WrongPendingPair:
    case ErrorCode::SessionComplete: return 409;
    case ErrorCode::BankUnavailable: return 503;
    case ErrorCode::Io: return 500;
    default: return 400;
    }
}

inline ApiError to_api_error(const Error& e) {
    return {std::string(to_string(e.code())), e.what(), e.field(), http_status(e.code())};
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

struct ServiceConfig {
    NoiseModel noise;
    RetrievalConfig retrieval;
    double mixing_floor = 0.0;
    std::size_t default_k = 8;
    std::size_t top_designers = 5;
    std::filesystem::path state_dir;  // empty keeps sessions in memory only
    std::string api_token;            // empty disables the guard
    std::optional<std::uint64_t> id_seed;
    std::function<std::string()> clock = utc_timestamp;
};

/// Read-only corpus shared by every session.
struct BankContext {
    DataBank bank;
    EmbeddingStore store;
    std::optional<ResidualAdapter> adapter;
};

inline BankContext load_bank_context(const std::filesystem::path& dir) {
    BankContext ctx{load_bank_dir(dir), load_embeddings(dir / "embeddings.txt"), std::nullopt};
    if (std::filesystem::exists(dir / "adapter.txt")) ctx.adapter = load_adapter(dir / "adapter.txt");
    ctx.store.validate_against(ctx.bank);
    return ctx;
}

// Session log format, one file per session:
//   session <id> k=<k> created=<timestamp>
//   <pair_id> <response>
// A final line without a newline is a torn write and is ignored.
struct SessionLog {
    std::string session_id;
    std::size_t k = 0;
    std::string created;
    std::vector<std::pair<std::string, int>> responses;
};

inline SessionLog read_session_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string(), path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (auto last = content.rfind('\n'); last == std::string::npos) {
        content.clear();
    } else {
        content.resize(last + 1);
    }
    std::istringstream lines(content);
    std::string line;
    SessionLog log;
    if (!std::getline(lines, line)) fail(ErrorCode::ParseError, "empty session log " + path.string());
    {
        std::istringstream head(line);
        std::string tag, k_field, created_field;
        head >> tag >> log.session_id >> k_field >> created_field;
        if (tag != "session" || k_field.rfind("k=", 0) != 0 || created_field.rfind("created=", 0) != 0) {
            fail(ErrorCode::ParseError, "bad session header in " + path.string());
        }
        try {
            log.k = std::stoul(k_field.substr(2));
        } catch (const std::exception&) {
            fail(ErrorCode::ParseError, "bad k in " + path.string());
        }
        log.created = created_field.substr(8);
    }
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string pair_id;
        int value = 0;
        if (!(row >> pair_id >> value)) fail(ErrorCode::ParseError, "bad response line in " + path.string());
        log.responses.emplace_back(pair_id, value);
    }
    return log;
}

class PreferenceService {
public:
    explicit PreferenceService(ServiceConfig config = {}) : config_(std::move(config)) {
        config_.noise.validate();
        init_ids();
    }

    PreferenceService(BankContext ctx, ServiceConfig config = {}) : config_(std::move(config)) {
        config_.noise.validate();
        init_ids();
        ctx_ = std::make_unique<BankContext>(std::move(ctx));
        index_ = std::make_unique<RetrievalIndex>(ctx_->bank, ctx_->store,
                                                  ctx_->adapter ? &*ctx_->adapter : nullptr, config_.retrieval);
        table_ = std::make_unique<LikelihoodTable>(config_.noise);
        candidates_ = ctx_->bank.pairs_in(Partition::Train);
        if (!config_.state_dir.empty()) {
            std::filesystem::create_directories(config_.state_dir);
            restore();
        }
    }

    const ServiceConfig& config() const noexcept { return config_; }
    bool has_bank() const noexcept { return ctx_ != nullptr; }

    /// Throws Unauthorized unless `authorization` is "Bearer <token>".
    void authorize(std::string_view authorization) const {
        if (config_.api_token.empty()) return;
        if (authorization != "Bearer " + config_.api_token) {
            fail(ErrorCode::Unauthorized, "missing or invalid API token", "Authorization");
        }
    }

    json create_session(const json& body = json::object()) {
        require_bank();
        std::size_t k = config_.default_k;
        if (body.is_object() && body.contains("k")) {
            const auto& kj = body.at("k");
            if (!kj.is_number_integer() || kj.get<long long>() < 0) {
                fail(ErrorCode::InvalidArgument, "k must be a non-negative integer", "k");
            }
            k = kj.get<std::size_t>();
        }
        if (k > candidates_.size()) {
            fail(ErrorCode::InvalidArgument,
                 "k exceeds the " + std::to_string(candidates_.size()) + " available onboarding pairs", "k");
        }
        auto entry = std::make_shared<Entry>(OnboardingSession(next_id(), ctx_->bank, k, config_.mixing_floor),
                                             config_.clock());
        refresh_pending(*entry);
        if (!config_.state_dir.empty()) {
            std::ofstream out(log_path(entry->session.id()), std::ios::binary | std::ios::trunc);
            out << "session " << entry->session.id() << " k=" << k << " created=" << entry->created << '\n';
            out.flush();
            if (!out) fail(ErrorCode::Io, "cannot write session log", entry->session.id());
        }
        {
            std::unique_lock lock(map_mutex_);
            sessions_.emplace(entry->session.id(), entry);
        }
        std::lock_guard guard(entry->mutex);
        json out = {{"session_id", entry->session.id()}, {"k", k}, {"created", entry->created}};
        add_progress(out, *entry);
        return out;
    }

    json submit_response(const std::string& session_id, const json& body) {
        require_bank();
        auto entry = find(session_id);
        std::lock_guard guard(entry->mutex);
        auto& session = entry->session;
        if (session.complete()) fail(ErrorCode::SessionComplete, "session '" + session_id + "' is complete");
        if (!body.is_object() || !body.contains("pair_id") || !body.at("pair_id").is_string()) {
            fail(ErrorCode::InvalidArgument, "pair_id is required", "pair_id");
        }
        const std::string pair_id = body.at("pair_id").get<std::string>();
        const std::string& pending = ctx_->bank.pairs()[*entry->pending].pair_id;
        if (pair_id != pending) {
            fail(ErrorCode::WrongPendingPair, "expected a response to '" + pending + "'", "pair_id");
        }
        if (!body.contains("response") || !body.at("response").is_number_integer()) {
            fail(ErrorCode::ValueOutOfDomain, "response must be one of -2, -1, 1, 2", "response");
        }
        const Label response = response_from_int(body.at("response").get<int>());

        OnboardingSession next = session;
        next.record(*entry->pending, response, ctx_->bank, *table_);
        if (!config_.state_dir.empty()) {
            std::ofstream out(log_path(session_id), std::ios::binary | std::ios::app);
            out << pair_id << ' ' << to_int(response) << '\n';
            out.flush();
            if (!out) fail(ErrorCode::Io, "cannot append to session log", session_id);
        }
        session = std::move(next);
        refresh_pending(*entry);

        json out = {{"session_id", session_id}};
        add_progress(out, *entry);
        return out;
    }

    json get_profile(const std::string& session_id) const {
        require_bank();
        auto entry = find(session_id);
        std::lock_guard guard(entry->mutex);
        const auto& session = entry->session;
        const auto& bank = ctx_->bank;
        json weights = json::array();
        for (std::size_t d = 0; d < bank.num_designers(); ++d) {
            weights.push_back({{"designer_id", bank.designer_ids()[d]}, {"weight", session.pi()[d]}});
        }
        json history = json::array();
        for (const auto& obs : session.history()) {
            history.push_back({{"pair_id", bank.pairs()[obs.pair].pair_id}, {"response", to_int(obs.response)}});
        }
        return {{"session_id", session_id},
                {"k", session.budget()},
                {"created", entry->created},
                {"done", session.complete()},
                {"entropy", entropy(session.pi())},
                {"noise", {{"eps_dir", config_.noise.eps_dir}, {"eps_str", config_.noise.eps_str}}},
                {"weights", std::move(weights)},
                {"history", std::move(history)}};
    }

    /// Current distribution of a session, for callers inside the process.
    DesignerDistribution session_distribution(const std::string& session_id) const {
        auto entry = find(session_id);
        std::lock_guard guard(entry->mutex);
        return entry->session.pi();
    }

    json rerank(const json& body) const {
        require_bank();
        if (!body.is_object()) fail(ErrorCode::InvalidArgument, "request body must be an object");
        const DesignerDistribution pi = profile_from_request(body);
        if (!body.contains("pool") || !body.at("pool").is_array()) {
            fail(ErrorCode::InvalidArgument, "pool must be an array", "pool");
        }
        std::vector<PoolItem> pool;
        std::set<std::string> seen;
        for (const auto& item : body.at("pool")) {
            PoolItem p;
            if (item.is_string()) {
                p.id = item.get<std::string>();
                p.embedding = index_->screen_embedding(p.id);
            } else if (item.is_object() && item.contains("id") && item.contains("embedding")) {
                p.id = item.at("id").get<std::string>();
                const auto values = item.at("embedding").get<std::vector<double>>();
                p.embedding = index_->embed_inline(Eigen::Map<const Vector>(values.data(),
                                                                          static_cast<Eigen::Index>(values.size())));
            } else {
                fail(ErrorCode::InvalidArgument, "pool entries are screen ids or {id, embedding} objects", "pool");
            }
            if (!seen.insert(p.id).second) fail(ErrorCode::InvalidArgument, "duplicate pool id '" + p.id + "'", "pool");
            pool.push_back(std::move(p));
        }
        const auto ranked = pointwise_scores(pool, pi, ctx_->bank, *index_);
        json ranking = json::array();
        for (const auto& r : ranked) ranking.push_back({{"screen_id", r.screen_id}, {"score", r.score}, {"rank", r.rank}});
        return {{"ranking", std::move(ranking)}, {"top", ranked.front().screen_id}};
    }

    json get_bank_pair(const std::string& pair_id) const {
        require_bank();
        return describe_pair(ctx_->bank.require_pair(pair_id));
    }

    json healthz() const {
        json out = {{"status", has_bank() ? "ok" : "no_bank"}};
        if (has_bank()) {
            std::shared_lock lock(map_mutex_);
            out["designers"] = ctx_->bank.num_designers();
            out["pairs"] = ctx_->bank.num_pairs();
            out["onboarding_pairs"] = candidates_.size();
            out["sessions"] = sessions_.size();
        }
        return out;
    }

    std::vector<std::string> session_ids() const {
        std::shared_lock lock(map_mutex_);
        std::vector<std::string> ids;
        for (const auto& [id, entry] : sessions_) ids.push_back(id);
        return ids;
    }

private:
    struct Entry {
        Entry(OnboardingSession s, std::string c) : session(std::move(s)), created(std::move(c)) {}
        mutable std::mutex mutex;
        OnboardingSession session;
        std::string created;
        std::optional<std::size_t> pending;
    };

    void init_ids() {
        id_rng_.seed(config_.id_seed ? *config_.id_seed : std::random_device{}());
    }

    void require_bank() const {
        if (!ctx_) fail(ErrorCode::BankUnavailable, "no bank is loaded");
    }

    std::string next_id() {
        std::lock_guard guard(id_mutex_);
        for (;;) {
            std::ostringstream out;
            out << "s-" << std::hex << std::setw(16) << std::setfill('0') << id_rng_();
            const std::string id = out.str();
            std::shared_lock lock(map_mutex_);
            if (!sessions_.count(id)) return id;
        }
    }

    std::filesystem::path log_path(const std::string& id) const { return config_.state_dir / (id + ".log"); }

    std::shared_ptr<Entry> find(const std::string& session_id) const {
        std::shared_lock lock(map_mutex_);
        auto it = sessions_.find(session_id);
        if (it == sessions_.end()) fail(ErrorCode::UnknownSession, "unknown session '" + session_id + "'", "session_id");
        return it->second;
    }

    void refresh_pending(Entry& entry) const {
        entry.pending.reset();
        if (!entry.session.complete()) {
            entry.pending = select_next_query(entry.session, candidates_, ctx_->bank, *table_);
        }
    }

    json describe_pair(std::size_t j) const {
        const auto& bank = ctx_->bank;
        const auto& pair = bank.pairs()[j];
        const auto& prompt = bank.prompts()[*bank.prompt_index(pair.prompt_id)];
        auto screen = [&](const std::string& id) {
            const auto& s = bank.screens()[*bank.screen_index(id)];
            json out = {{"screen_id", s.screen_id}, {"embedding_ref", s.embedding_ref}};
            if (!s.image_url.empty()) out["image_url"] = s.image_url;
            return out;
        };
        return {{"pair_id", pair.pair_id},
                {"prompt_id", prompt.prompt_id},
                {"prompt", prompt.text},
                {"category", prompt.category},
                {"left", screen(pair.left_id)},
                {"right", screen(pair.right_id)}};
    }

    void add_progress(json& out, const Entry& entry) const {
        const auto& session = entry.session;
        const auto& bank = ctx_->bank;
        std::vector<std::size_t> order(bank.num_designers());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return session.pi()[a] > session.pi()[b]; });
        json top = json::array();
        for (std::size_t r = 0; r < std::min(config_.top_designers, order.size()); ++r) {
            top.push_back({{"designer_id", bank.designer_ids()[order[r]]}, {"weight", session.pi()[order[r]]}});
        }
        out["responses"] = session.history().size();
        out["entropy"] = entropy(session.pi());
        out["top_designers"] = std::move(top);
        out["done"] = session.complete();
        out["next_query"] = entry.pending ? describe_pair(*entry.pending) : json(nullptr);
    }

    DesignerDistribution profile_from_request(const json& body) const {
        if (body.contains("session_id")) return session_distribution(body.at("session_id").get<std::string>());
        if (!body.contains("profile")) {
            fail(ErrorCode::InvalidArgument, "either session_id or profile is required", "profile");
        }
        const auto& bank = ctx_->bank;
        const auto& profile = body.at("profile");
        const json& weights = profile.is_object() && profile.contains("weights") ? profile.at("weights") : profile;
        std::vector<double> w(bank.num_designers(), 0.0);
        auto assign = [&](const std::string& id, const json& value) {
            const auto d = bank.designer_index(id);
            if (!d) fail(ErrorCode::InvalidArgument, "unknown designer '" + id + "'", "profile");
            if (!value.is_number() || !(value.get<double>() >= 0.0)) {
                fail(ErrorCode::InvalidArgument, "weights must be non-negative numbers", "profile");
            }
            w[*d] = value.get<double>();
        };
        if (weights.is_object()) {
            for (const auto& [id, value] : weights.items()) assign(id, value);
        } else if (weights.is_array()) {
            for (const auto& item : weights) assign(item.at("designer_id").get<std::string>(), item.at("weight"));
        } else {
            fail(ErrorCode::InvalidArgument, "profile weights must be an object or array", "profile");
        }
        return DesignerDistribution::from_weights(std::move(w));
    }

    void restore() {
        std::vector<std::filesystem::path> logs;
        for (const auto& file : std::filesystem::directory_iterator(config_.state_dir)) {
            if (file.path().extension() == ".log") logs.push_back(file.path());
        }
        std::sort(logs.begin(), logs.end());
        for (const auto& path : logs) {
            const SessionLog log = read_session_log(path);
            auto entry = std::make_shared<Entry>(
                OnboardingSession(log.session_id, ctx_->bank, log.k, config_.mixing_floor), log.created);
            for (const auto& [pair_id, value] : log.responses) {
                entry->session.record(ctx_->bank.require_pair(pair_id), label_from_int(value), ctx_->bank, *table_);
            }
            refresh_pending(*entry);
            sessions_.emplace(log.session_id, std::move(entry));
        }
    }

    ServiceConfig config_;
    std::unique_ptr<BankContext> ctx_;
    std::unique_ptr<RetrievalIndex> index_;
    std::unique_ptr<LikelihoodTable> table_;
    std::vector<std::size_t> candidates_;

    mutable std::shared_mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::mutex id_mutex_;
    std::mt19937_64 id_rng_;
};

} // namespace prefmix
