#pragma once
// Screen embeddings and the residual adapter trained on pairwise labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "prefmix/bank.hpp"
#include "prefmix/error.hpp"
#include "prefmix/label.hpp"

namespace prefmix {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline Vector normalized(const Vector& v) {
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        fail(ErrorCode::ZeroVector, "cannot normalize a zero or non-finite vector");
    }
    return v / norm;
}

/// Unit-norm embeddings keyed by embedding reference (screen id by default).
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    explicit EmbeddingStore(Eigen::Index dim) : dim_(dim) {}

    Eigen::Index dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return vectors_.size(); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const std::vector<Vector>& vectors() const noexcept { return vectors_; }

    /// Inserts `v` normalized to unit length.
    void add(const std::string& id, const Vector& v) {
        if (dim_ == 0) dim_ = v.size();
        if (v.size() != dim_) {
            fail(ErrorCode::DimensionMismatch,
                 "embedding '" + id + "' has dimension " + std::to_string(v.size()) + ", expected " +
                     std::to_string(dim_),
                 id);
        }
        Vector unit = normalized(v);
        if (auto it = index_.find(id); it != index_.end()) {
            vectors_[it->second] = std::move(unit);
            return;
        }
        index_.emplace(id, vectors_.size());
        ids_.push_back(id);
        vectors_.push_back(std::move(unit));
    }

    const Vector* find(const std::string& id) const {
        auto it = index_.find(id);
        return it == index_.end() ? nullptr : &vectors_[it->second];
    }

    const Vector& at(const std::string& id) const {
        if (const Vector* v = find(id)) return *v;
        fail(ErrorCode::MissingScreen, "no embedding for '" + id + "'", id);
    }

    /// Embedding of a bank screen, resolved through its embedding_ref.
    const Vector& for_screen(const DataBank& bank, const std::string& screen_id) const {
        auto idx = bank.screen_index(screen_id);
        if (!idx) fail(ErrorCode::UnknownScreen, "unknown screen '" + screen_id + "'", screen_id);
        return at(bank.screens()[*idx].embedding_ref);
    }

    /// Throws MissingScreen unless every bank screen resolves.
    void validate_against(const DataBank& bank) const {
        for (const auto& s : bank.screens()) {
            if (!find(s.embedding_ref)) {
                fail(ErrorCode::MissingScreen,
                     "screen '" + s.screen_id + "' has no embedding '" + s.embedding_ref + "'",
                     s.screen_id);
            }
        }
    }

private:
    Eigen::Index dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<Vector> vectors_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Parses `dim=<D>` followed by lines of `<id> x_1 ... x_D`.
inline EmbeddingStore parse_embeddings(std::istream& in) {
    std::string line;
    Eigen::Index dim = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("dim=", 0) != 0) fail(ErrorCode::ParseError, "embedding file must start with dim=<D>");
        dim = std::stol(line.substr(4));
        break;
    }
    if (dim <= 0) fail(ErrorCode::ParseError, "embedding file has no positive dim header");
    EmbeddingStore store(dim);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream row(line);
        std::string id;
        row >> id;
        std::vector<double> values;
        double x;
        while (row >> x) values.push_back(x);
        if (!row.eof()) {
            fail(ErrorCode::ParseError, "embedding line " + std::to_string(lineno) + " has a non-numeric value", id);
        }
        if (static_cast<Eigen::Index>(values.size()) != dim) {
            fail(ErrorCode::DimensionMismatch,
                 "embedding '" + id + "' has " + std::to_string(values.size()) + " values, expected " +
                     std::to_string(dim),
                 id);
        }
        store.add(id, Eigen::Map<const Vector>(values.data(), dim));
    }
    return store;
}

inline EmbeddingStore load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string(), path.string());
    return parse_embeddings(in);
}

inline void write_embeddings(std::ostream& out, const EmbeddingStore& store) {
    out << "dim=" << store.dim() << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < store.size(); ++i) {
        out << store.ids()[i];
        for (double x : store.vectors()[i]) out << ' ' << x;
        out << '\n';
    }
}

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingStore& store) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string(), path.string());
    write_embeddings(out, store);
}

// ---------------------------------------------------------------------------
// Residual adapter
// ---------------------------------------------------------------------------

/// Training hyperparameters. Defaults follow the published UIClip adapter setup.
struct TrainConfig {
    double learning_rate = 5e-4;
    double t_max = 24;
    double eta_min = 1e-4;
    double weight_decay = 1e-2;
    std::size_t batch_size = 64;
    double grad_clip = 1.0;
    std::size_t patience = 5;
    double margin = 0.2;
    double margin_multiplier = 1.1;
    std::size_t max_epochs = 24;
    std::uint64_t seed = 0;

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                fail(ErrorCode::InvalidArgument, std::string(name) + " must be positive", name);
            }
        };
        positive(learning_rate, "learning_rate");
        positive(t_max, "t_max");
        positive(eta_min, "eta_min");
        positive(weight_decay, "weight_decay");
        positive(grad_clip, "grad_clip");
        positive(margin, "margin");
        positive(margin_multiplier, "margin_multiplier");
        if (batch_size == 0) fail(ErrorCode::InvalidArgument, "batch_size must be positive", "batch_size");
        if (patience < 1) fail(ErrorCode::InvalidArgument, "patience must be at least 1", "patience");
        if (max_epochs == 0) fail(ErrorCode::InvalidArgument, "max_epochs must be positive", "max_epochs");
    }

    /// Cosine-annealed learning rate for a zero-based epoch.
    double lr_at(std::size_t epoch) const {
        const double phase = std::min(static_cast<double>(epoch), t_max) / t_max;
        return eta_min + 0.5 * (learning_rate - eta_min) * (1.0 + std::cos(std::numbers::pi * phase));
    }
};

/// z' = normalize(z + W z). The linear head is only used while training.
struct ResidualAdapter {
    Matrix weight;
    Vector head;
    double margin = 0.2;
    double margin_multiplier = 1.1;

    static ResidualAdapter identity(Eigen::Index dim) {
        return {Matrix::Zero(dim, dim), Vector::Zero(dim), 0.2, 1.1};
    }

    Eigen::Index dim() const noexcept { return weight.rows(); }

    bool finite() const { return weight.allFinite() && head.allFinite(); }
};

inline Vector apply_adapter(const ResidualAdapter& adapter, const Vector& z) {
    if (z.size() != adapter.dim()) {
        fail(ErrorCode::DimensionMismatch, "adapter dimension " + std::to_string(adapter.dim()) +
                                               " does not match embedding dimension " +
                                               std::to_string(z.size()));
    }
    return normalized(z + adapter.weight * z);
}

/// Copy of `store` with every vector passed through the adapter.
inline EmbeddingStore adapt_store(const EmbeddingStore& store, const ResidualAdapter& adapter) {
    EmbeddingStore out(store.dim());
    for (std::size_t i = 0; i < store.size(); ++i) {
        out.add(store.ids()[i], apply_adapter(adapter, store.vectors()[i]));
    }
    return out;
}

inline double label_margin(double margin, double multiplier, Label label) {
    return strength(label) == 2 ? margin * multiplier : margin;
}

struct MarginLoss {
    double loss = 0.0;
    Matrix grad_weight;
    Vector grad_head;
};

/// Hinge ranking loss max(0, m(|c|) - sign(c) * head . (z'_L - z'_R)) and its
/// exact gradient (zero at and beyond the hinge).
inline MarginLoss pair_margin_loss(const ResidualAdapter& adapter, const Vector& left,
                                   const Vector& right, Label label) {
    const Vector yl = left + adapter.weight * left;
    const Vector yr = right + adapter.weight * right;
    const double nl = yl.norm();
    const double nr = yr.norm();
    if (!(nl > 0.0) || !(nr > 0.0)) fail(ErrorCode::ZeroVector, "adapted embedding collapsed to zero");
    const Vector ul = yl / nl;
    const Vector ur = yr / nr;
    const double sign = direction(label);
    const double target = label_margin(adapter.margin, adapter.margin_multiplier, label);
    const double slack = target - sign * adapter.head.dot(ul - ur);

    MarginLoss out{0.0, Matrix::Zero(adapter.dim(), adapter.dim()), Vector::Zero(adapter.dim())};
    if (slack <= 0.0) return out;
    out.loss = slack;
    out.grad_head = -sign * (ul - ur);
    // d z'/d y = (I - z' z'^T) / |y|
    const Vector gl = -sign * (adapter.head - ul * ul.dot(adapter.head)) / nl;
    const Vector gr = sign * (adapter.head - ur * ur.dot(adapter.head)) / nr;
    out.grad_weight = gl * left.transpose() + gr * right.transpose();
    return out;
}

/// One labeled comparison with embeddings borrowed from a store.
struct PairExample {
    const Vector* left;
    const Vector* right;
    Label label;
};

/// Every (designer, pair, label) triple of a partition, as independent examples.
inline std::vector<PairExample> make_examples(const DataBank& bank, const EmbeddingStore& store,
                                              Partition partition) {
    std::vector<PairExample> out;
    for (std::size_t j : bank.pairs_in(partition)) {
        const auto& pair = bank.pairs()[j];
        const Vector* l = &store.for_screen(bank, pair.left_id);
        const Vector* r = &store.for_screen(bank, pair.right_id);
        for (std::size_t d = 0; d < bank.num_designers(); ++d) {
            if (auto label = bank.label(d, j)) out.push_back({l, r, *label});
        }
    }
    return out;
}

inline double mean_margin_loss(const ResidualAdapter& adapter, std::span<const PairExample> examples) {
    if (examples.empty()) return 0.0;
    double total = 0.0;
    for (const auto& ex : examples) total += pair_margin_loss(adapter, *ex.left, *ex.right, ex.label).loss;
    return total / static_cast<double>(examples.size());
}

/// Fraction of examples whose label direction matches sign(head . (z'_L - z'_R));
/// a zero score predicts left.
inline double direction_accuracy(const ResidualAdapter& adapter, std::span<const PairExample> examples) {
    if (examples.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& ex : examples) {
        const double score =
            adapter.head.dot(apply_adapter(adapter, *ex.left) - apply_adapter(adapter, *ex.right));
        const int predicted = score >= 0.0 ? 1 : -1;
        hits += predicted == direction(ex.label);
    }
    return static_cast<double>(hits) / static_cast<double>(examples.size());
}

struct EpochStats {
    std::size_t epoch;
    double learning_rate;
    double train_loss;
    double val_accuracy;
};

struct TrainResult {
    ResidualAdapter adapter;  // best on validation
    std::size_t best_epoch = 0;
    double best_val_accuracy = 0.0;
    std::vector<EpochStats> history;
};

/// Minibatch gradient descent with cosine schedule, decoupled weight decay,
/// global-norm clipping and early stopping on validation direction accuracy.
inline TrainResult train_adapter(std::span<const PairExample> train, std::span<const PairExample> val,
                                 Eigen::Index dim, const TrainConfig& config) {
    config.validate();
    if (train.empty()) fail(ErrorCode::EmptyBank, "no training examples");

    ResidualAdapter adapter{Matrix::Zero(dim, dim), Vector::Zero(dim), config.margin,
                            config.margin_multiplier};
    TrainResult result;
    result.adapter = adapter;
    result.best_val_accuracy = -1.0;

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t stalled = 0;

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double lr = config.lr_at(epoch);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            Matrix gw = Matrix::Zero(dim, dim);
            Vector gh = Vector::Zero(dim);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < stop; ++i) {
                const auto& ex = train[order[i]];
                MarginLoss l = pair_margin_loss(adapter, *ex.left, *ex.right, ex.label);
                batch_loss += l.loss;
                gw += l.grad_weight;
                gh += l.grad_head;
            }
            const double scale = 1.0 / static_cast<double>(stop - start);
            gw *= scale;
            gh *= scale;
            if (!std::isfinite(batch_loss) || !gw.allFinite() || !gh.allFinite()) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch starting " << start
                    << " (loss sum " << batch_loss << ", lr " << lr << ")";
                fail(ErrorCode::NonFiniteLoss, msg.str());
            }
            const double norm = std::sqrt(gw.squaredNorm() + gh.squaredNorm());
            if (norm > config.grad_clip) {
                gw *= config.grad_clip / norm;
                gh *= config.grad_clip / norm;
            }
            adapter.weight *= 1.0 - lr * config.weight_decay;
            adapter.head *= 1.0 - lr * config.weight_decay;
            adapter.weight -= lr * gw;
            adapter.head -= lr * gh;
        }
        if (!adapter.finite()) fail(ErrorCode::NonFiniteLoss, "parameters became non-finite at epoch " + std::to_string(epoch));

        const double train_loss = mean_margin_loss(adapter, train);
        const double val_acc = val.empty() ? 0.0 : direction_accuracy(adapter, val);
        result.history.push_back({epoch, lr, train_loss, val_acc});

        if (val.empty() || val_acc > result.best_val_accuracy) {
            result.best_val_accuracy = val_acc;
            result.best_epoch = epoch;
            result.adapter = adapter;
            stalled = 0;
        } else if (++stalled >= config.patience) {
            break;
        }
    }
    return result;
}

/// Trains on the bank's train partition and early-stops on its validation partition.
inline TrainResult train_adapter(const DataBank& bank, const EmbeddingStore& store,
                                 const TrainConfig& config) {
    const auto train = make_examples(bank, store, Partition::Train);
    const auto val = make_examples(bank, store, Partition::Validation);
    return train_adapter(train, val, store.dim(), config);
}

// ---------------------------------------------------------------------------
// Checkpoint: header, config echo, row-major W, head.
// ---------------------------------------------------------------------------

inline void write_adapter(std::ostream& out, const ResidualAdapter& adapter,
                          const TrainConfig* config = nullptr) {
    out << "prefmix-adapter v1\n" << std::setprecision(17);
    out << "dim=" << adapter.dim() << '\n';
    out << "margin=" << adapter.margin << '\n';
    out << "margin_multiplier=" << adapter.margin_multiplier << '\n';
    if (config) {
        out << "config learning_rate=" << config->learning_rate << " t_max=" << config->t_max
            << " eta_min=" << config->eta_min << " weight_decay=" << config->weight_decay
            << " batch_size=" << config->batch_size << " grad_clip=" << config->grad_clip
            << " patience=" << config->patience << " max_epochs=" << config->max_epochs
            << " seed=" << config->seed << '\n';
    }
    out << "W\n";
    for (Eigen::Index r = 0; r < adapter.dim(); ++r) {
        for (Eigen::Index c = 0; c < adapter.dim(); ++c) out << (c ? " " : "") << adapter.weight(r, c);
        out << '\n';
    }
    out << "a\n";
    for (Eigen::Index c = 0; c < adapter.dim(); ++c) out << (c ? " " : "") << adapter.head(c);
    out << '\n';
}

inline ResidualAdapter read_adapter(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("prefmix-adapter", 0) != 0) {
        fail(ErrorCode::ParseError, "not an adapter checkpoint");
    }
    ResidualAdapter adapter;
    Eigen::Index dim = 0;
    while (std::getline(in, line) && line != "W") {
        if (line.rfind("dim=", 0) == 0) dim = std::stol(line.substr(4));
        else if (line.rfind("margin_multiplier=", 0) == 0) adapter.margin_multiplier = std::stod(line.substr(18));
        else if (line.rfind("margin=", 0) == 0) adapter.margin = std::stod(line.substr(7));
    }
    if (dim <= 0 || line != "W") fail(ErrorCode::ParseError, "adapter checkpoint is missing dim or W");
    adapter.weight.resize(dim, dim);
    adapter.head.resize(dim);
    for (Eigen::Index r = 0; r < dim; ++r) {
        for (Eigen::Index c = 0; c < dim; ++c) {
            if (!(in >> adapter.weight(r, c))) fail(ErrorCode::ParseError, "truncated adapter weights");
        }
    }
    in >> line;
    if (line != "a") fail(ErrorCode::ParseError, "adapter checkpoint is missing head");
    for (Eigen::Index c = 0; c < dim; ++c) {
        if (!(in >> adapter.head(c))) fail(ErrorCode::ParseError, "truncated adapter head");
    }
    if (!adapter.finite()) fail(ErrorCode::ParseError, "adapter checkpoint has non-finite entries");
    return adapter;
}

inline void save_adapter(const std::filesystem::path& path, const ResidualAdapter& adapter,
                         const TrainConfig* config = nullptr) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string(), path.string());
    write_adapter(out, adapter, config);
}

inline ResidualAdapter load_adapter(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string(), path.string());
    return read_adapter(in);
}

} // namespace prefmix
