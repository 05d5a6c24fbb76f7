#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "veritree/autodiff.hpp"

namespace fd_check {

/// Central finite differences against reverse-mode gradients.
///
/// `build_loss` must construct a fresh graph from the inputs' *current*
/// values and return the scalar loss tensor. The harness perturbs one input
/// element at a time (eps = 1e-4) and compares (f+ - f-) / 2eps with the
/// accumulated analytic gradient.
///
/// Piecewise ops (relu, abs, max-pool) are smooth almost everywhere, but an
/// element can land within eps of a kink; there the eps and eps/2 central
/// estimates disagree with each other. Such elements are compared against
/// the half-step estimate, and when even that window straddles the kink the
/// element is skipped (bounded by kink_budget).
struct Result {
    bool ok = true;
    std::string detail;
    double worst_rel = 0.0;
    std::size_t kink_skips = 0;
};

inline Result compare_gradients(std::vector<veritree::ad::Tensor> inputs,
                                const std::function<veritree::ad::Tensor()>& build_loss,
                                double eps = 1e-4, double rel_tol = 1e-4,
                                double abs_tol = 1e-7, double kink_budget = 0.01) {
    using veritree::ad::Tensor;
    Result result;

    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Tensor loss = build_loss();
    veritree::ad::backward(loss);

    std::size_t total_elements = 0;
    auto close = [&](double a, double b) {
        const double diff = std::fabs(a - b);
        const double scale = std::max(std::fabs(a), std::fabs(b));
        return diff <= abs_tol || diff / std::max(scale, 1e-12) <= rel_tol;
    };

    for (std::size_t which = 0; which < inputs.size(); ++which) {
        Tensor& input = inputs[which];
        const std::vector<double> analytic =
            input.has_grad() ? input.grad() : std::vector<double>(input.size(), 0.0);
        auto& values = input.mutable_values();
        total_elements += values.size();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            auto central = [&](double h) {
                values[i] = original + h;
                const double up = build_loss().item();
                values[i] = original - h;
                const double down = build_loss().item();
                values[i] = original;
                return (up - down) / (2.0 * h);
            };
            const double numeric = central(eps);

            if (close(analytic[i], numeric)) {
                const double scale = std::max(std::fabs(analytic[i]), std::fabs(numeric));
                if (scale > abs_tol / rel_tol)
                    result.worst_rel = std::max(
                        result.worst_rel,
                        std::fabs(analytic[i] - numeric) / std::max(scale, 1e-12));
                continue;
            }

            // Disagreement: distinguish a true gradient bug from a kink
            // inside the probe window.
            const double half = central(eps / 2.0);
            const bool smooth = close(numeric, half) ||
                                std::fabs(numeric - half) <=
                                    1e-3 * std::max({std::fabs(numeric), std::fabs(half), 1e-9});
            if (smooth) {
                result.ok = false;
                result.detail = "input " + std::to_string(which) + " element " +
                                std::to_string(i) + ": analytic " + std::to_string(analytic[i]) +
                                " vs numeric " + std::to_string(numeric);
                return result;
            }
            if (close(analytic[i], half)) continue;  // kink sat in [eps/2, eps]
            ++result.kink_skips;                     // kink closer than eps/2
        }
    }

    if (total_elements > 0 &&
        static_cast<double>(result.kink_skips) >
            kink_budget * static_cast<double>(total_elements)) {
        result.ok = false;
        result.detail = "too many kink-adjacent elements skipped: " +
                        std::to_string(result.kink_skips) + "/" + std::to_string(total_elements);
    }
    return result;
}

/// Random values in [-3, 3], avoiding a dead zone around kink points so
/// central differences stay valid for abs/relu/max.
inline std::vector<double> bounded_values(veritree::Rng& rng, std::size_t n,
                                          double kink_gap = 0.05) {
    std::vector<double> v(n);
    for (auto& x : v) {
        do {
            x = rng.next_double() * 6.0 - 3.0;
        } while (std::fabs(x) < kink_gap);
    }
    return v;
}

}  // namespace fd_check
