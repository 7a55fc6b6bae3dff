#pragma once

#include "orbsde/linalg.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace orbsde::forward {

/// Uniform time grid on [0, T].
struct TimeGrid {
    double horizon = 1.0;
    int steps = 1;

    double dt() const { return horizon / steps; }
    double node(int i) const { return horizon * i / steps; }
};

/// Forward SDE coefficients dX = b(t,X) dt + sigma(t,X) dW with declared
/// linear-growth/Lipschitz constant. When the drift does not depend on the
/// state and the diffusion is constant, `lattice` is populated and the
/// recombining-lattice engine can represent X as a function of W.
struct ForwardModel {
    int state_dim = 1;
    int noise_dim = 1;
    Vec x0;
    double growth_L = 1.0;
    std::function<Vec(double, const Vec&)> drift;
    std::function<Mat(double, const Vec&)> diffusion;

    struct LatticeCompat {
        std::function<Vec(double)> drift_t; // b(t), state independent
        Mat sigma_const;                    // q x k
    };
    std::optional<LatticeCompat> lattice;
    std::string name = "user-defined";

    static ForwardModel brownian(int q);
    static ForwardModel brownian_from(Vec x0, int noise_dim);
    static ForwardModel gbm(Vec x0, double mu, double nu);
    static ForwardModel ou(Vec x0, double kappa, Vec theta, double nu);
};

/// Simulated paths plus the Brownian increments that produced them.
/// Reproducible: a path's stream is a pure function of (seed, path index).
struct PathBundle {
    int path_count = 0;
    int steps = 0;
    int state_dim = 0;
    int noise_dim = 0;
    std::uint64_t seed = 0;
    std::vector<Mat> states;     // slice i in [0, steps]: path_count x q
    std::vector<Mat> increments; // step i in [0, steps):  path_count x k
};

PathBundle simulate(const ForwardModel& model, const TimeGrid& grid,
                    int path_count, std::uint64_t seed);

/// Recombining lattice of +-sqrt(dt) Bernoulli increments per noise
/// component. Slice i holds (i+1)^k nodes indexed in mixed radix by the
/// number of up-moves per component; each one-step transition has
/// probability 2^-k. Exact conditional expectations for node-measurable
/// payoffs, used as the noise-free engine at desk scale.
class Lattice {
public:
    Lattice(const TimeGrid& grid, int noise_dim, std::size_t node_cap = 2000000);

    int steps() const { return steps_; }
    int noise_dim() const { return noise_dim_; }
    double dt() const { return dt_; }
    double time(int slice) const { return dt_ * slice; }

    int node_count(int slice) const;
    /// Brownian state at a node: component c equals (2 u_c - i) sqrt(dt).
    Vec brownian(int slice, int node) const;
    const Vec& probabilities(int slice) const { return probabilities_[static_cast<std::size_t>(slice)]; }
    /// Child index at slice+1 for an up/down move mask (bit c set = up in c).
    int child(int slice, int node, unsigned move_mask) const;
    /// Increment vector of a move mask (+-sqrt(dt) per component).
    Vec increment(unsigned move_mask) const;
    int move_count() const { return 1 << noise_dim_; }

private:
    void decode(int slice, int node, int* ups) const;

    int steps_;
    int noise_dim_;
    double dt_;
    double sqrt_dt_;
    std::vector<Vec> probabilities_;
};

} // namespace orbsde::forward
