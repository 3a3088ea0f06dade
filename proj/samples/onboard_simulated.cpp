// Onboards one synthetic designer with adaptive queries and reranks a pool
// of screens for them.

#include <iostream>

#include "prefmix/profile.hpp"
#include "prefmix/retrieval.hpp"
#include "prefmix/sim.hpp"

using namespace prefmix;

int main() {
    SyntheticBankSpec spec;
    spec.n_designers = 12;
    spec.n_clusters = 3;
    spec.n_prompts = 60;
    const auto sb = gen_synthetic_bank(spec, 7);
    const DataBank bank = sb.bank.with_split(make_splits(sb.bank, {0.6, 0.2, 0.2}, 7));

    // Designer 0 plays the new user; the bank keeps the other eleven.
    const std::size_t user = 0;
    const DataBank others = bank.without_designer(user);
    const LikelihoodTable table{NoiseModel{}};
    OnboardingSession session("demo", others, 8);
    const auto candidates = others.pairs_in(Partition::Train);

    std::cout << "step 0  entropy " << entropy(session.pi()) << '\n';
    while (!session.complete()) {
        const std::size_t pair = select_next_query(session, candidates, others, table);
        const Label answer = *bank.label(user, pair);
        session.record(pair, answer, others, table);
        std::cout << "step " << session.history().size() << "  asked " << others.pairs()[pair].pair_id << "  answered "
                  << to_int(answer) << "  entropy " << entropy(session.pi()) << '\n';
    }

    const std::size_t top = session.pi().argmax();
    std::cout << "closest designer " << others.designer_ids()[top] << " (cluster "
              << sb.designers[top + 1].cluster_id << ", user cluster " << sb.designers[user].cluster_id << ")\n";

    const RetrievalIndex index(others, sb.store, nullptr);
    std::vector<std::string> pool;
    for (std::size_t s = 0; s < 4; ++s) pool.push_back("p059_s" + std::to_string(s));
    for (const auto& r : pointwise_scores(pool, session.pi(), index)) {
        std::cout << r.rank << ". " << r.screen_id << "  " << r.score << '\n';
    }
}
