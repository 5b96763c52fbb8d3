#pragma once

// Deterministic 5x5 gridworld fixture for the tabular learners, with an
// exact value-iteration oracle. Test-only code.

#include "multilift/types.hpp"

#include <cmath>

namespace gridtest {

struct GridWorld {
    static constexpr int kSize = 5;
    static constexpr int kStates = kSize * kSize;
    static constexpr int kActions = 4;  // 0:+x, 1:-x, 2:+y, 3:-y
    int goal = kStates - 1;             // corner (4,4)
    double step_reward = -0.01;
    double goal_reward = 1.0;

    static int x_of(int s) { return s % kSize; }
    static int y_of(int s) { return s / kSize; }

    int next_state(int s, int a) const {
        int x = x_of(s), y = y_of(s);
        switch (a) {
            case 0: x = std::min(x + 1, kSize - 1); break;
            case 1: x = std::max(x - 1, 0); break;
            case 2: y = std::min(y + 1, kSize - 1); break;
            case 3: y = std::max(y - 1, 0); break;
        }
        return y * kSize + x;
    }

    bool terminal(int s) const { return s == goal; }

    double reward(int s_next) const {
        return s_next == goal ? goal_reward : step_reward;
    }
};

// Exact Q* by synchronous value iteration to machine precision.
inline multilift::MatX value_iteration(const GridWorld& world, double discount) {
    multilift::MatX q = multilift::MatX::Zero(GridWorld::kStates, GridWorld::kActions);
    for (int sweep = 0; sweep < 100000; ++sweep) {
        multilift::MatX next = q;
        double change = 0.0;
        for (int s = 0; s < GridWorld::kStates; ++s) {
            if (world.terminal(s)) {
                next.row(s).setZero();
                continue;
            }
            for (int a = 0; a < GridWorld::kActions; ++a) {
                const int s2 = world.next_state(s, a);
                const double value =
                    world.reward(s2) +
                    (world.terminal(s2) ? 0.0 : discount * q.row(s2).maxCoeff());
                change = std::max(change, std::abs(value - next(s, a)));
                next(s, a) = value;
            }
        }
        q = next;
        if (change < 1e-14) break;
    }
    return q;
}

// Greedy action with deterministic tie-breaking (lowest index).
inline int greedy(const multilift::MatX& q, int s) {
    int best = 0;
    for (int a = 1; a < q.cols(); ++a) {
        if (q(s, a) > q(s, best)) best = a;
    }
    return best;
}

// A state has a unique optimal action when the top-two gap is clear.
inline bool unique_optimum(const multilift::MatX& q, int s, double tol = 1e-9) {
    const int best = greedy(q, s);
    for (int a = 0; a < q.cols(); ++a) {
        if (a != best && q(s, a) > q(s, best) - tol) return false;
    }
    return true;
}

}  // namespace gridtest
