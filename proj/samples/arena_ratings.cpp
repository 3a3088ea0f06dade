// Fits Bradley-Terry ratings with bootstrap intervals to a simulated
// head-to-head study between four ranking conditions.

#include <iomanip>
#include <iostream>
#include <random>

#include "prefmix/arena.hpp"

using namespace prefmix;

int main() {
    const std::vector<std::string> conditions{"personalized", "generic", "random", "popular"};
    const std::vector<double> strength{2.0, 1.2, 0.5, 1.0};

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Battle> battles;
    for (int u = 0; u < 12; ++u) {
        for (int p = 0; p < 20; ++p) {
            for (std::size_t i = 0; i < conditions.size(); ++i) {
                for (std::size_t j = i + 1; j < conditions.size(); ++j) {
                    Outcome o = Outcome::Tie;
                    if (unit(rng) > 0.1) {
                        o = unit(rng) < strength[i] / (strength[i] + strength[j]) ? Outcome::AWins : Outcome::BWins;
                    }
                    battles.push_back({"u" + std::to_string(u), "p" + std::to_string(p), conditions[i],
                                       conditions[j], o, {}});
                }
            }
        }
    }

    const auto result = analyze_arena(record_battles(std::move(battles)), 1000, 3);
    std::cout << std::fixed << std::setprecision(1);
    std::cout << "condition      rating   95% interval       first  win rate\n";
    for (std::size_t k = 0; k < result.conditions.size(); ++k) {
        const auto& b = result.bootstrap.rows[k];
        std::cout << std::left << std::setw(14) << result.conditions[k] << std::right << std::setw(7)
                  << result.ratings[k] << "  [" << std::setw(6) << b.lo95 << ", " << std::setw(6) << b.hi95 << "]  "
                  << std::setw(5) << 100 * b.first_place_share << "%  " << std::setw(6)
                  << 100 * result.wins.aggregate[k] << "%\n";
    }
}
