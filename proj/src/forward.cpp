#include "orbsde/forward.hpp"

#include "orbsde/errors.hpp"
#include "orbsde/rng.hpp"

#include <cmath>
#include <sstream>

namespace orbsde::forward {

ForwardModel ForwardModel::brownian(int q) {
    return brownian_from(Vec::Zero(q), q);
}

ForwardModel ForwardModel::brownian_from(Vec x0, int noise_dim) {
    ForwardModel m;
    m.state_dim = static_cast<int>(x0.size());
    m.noise_dim = noise_dim;
    m.x0 = std::move(x0);
    m.growth_L = 1.0;
    Mat sigma = Mat::Identity(m.state_dim, m.noise_dim);
    m.drift = [q = m.state_dim](double, const Vec&) { return Vec::Zero(q); };
    m.diffusion = [sigma](double, const Vec&) { return sigma; };
    m.lattice = LatticeCompat{[q = m.state_dim](double) { return Vec::Zero(q); }, sigma};
    m.name = "brownian";
    return m;
}

ForwardModel ForwardModel::gbm(Vec x0, double mu, double nu) {
    ForwardModel m;
    m.state_dim = static_cast<int>(x0.size());
    m.noise_dim = m.state_dim;
    m.x0 = std::move(x0);
    m.growth_L = std::abs(mu) + std::abs(nu) + 1.0;
    m.drift = [mu](double, const Vec& x) { return Vec(mu * x); };
    m.diffusion = [nu](double, const Vec& x) { return Mat(nu * x.asDiagonal()); };
    m.name = "gbm";
    return m;
}

ForwardModel ForwardModel::ou(Vec x0, double kappa, Vec theta, double nu) {
    ForwardModel m;
    m.state_dim = static_cast<int>(x0.size());
    m.noise_dim = m.state_dim;
    m.x0 = std::move(x0);
    m.growth_L = std::abs(kappa) * (1.0 + theta.norm()) + std::abs(nu) + 1.0;
    m.drift = [kappa, theta](double, const Vec& x) { return Vec(kappa * (theta - x)); };
    Mat sigma = nu * Mat::Identity(m.state_dim, m.state_dim);
    m.diffusion = [sigma](double, const Vec&) { return sigma; };
    m.name = "ou";
    return m;
}

PathBundle simulate(const ForwardModel& model, const TimeGrid& grid,
                    int path_count, std::uint64_t seed) {
    if (path_count < 1) throw ValidationError("path count must be >= 1");
    if (grid.steps < 1) throw ValidationError("time grid must have at least one step");
    if (model.x0.size() != model.state_dim) throw ValidationError("forward model x0 has wrong dimension");

    PathBundle bundle;
    bundle.path_count = path_count;
    bundle.steps = grid.steps;
    bundle.state_dim = model.state_dim;
    bundle.noise_dim = model.noise_dim;
    bundle.seed = seed;
    bundle.states.assign(static_cast<std::size_t>(grid.steps) + 1, Mat(path_count, model.state_dim));
    bundle.increments.assign(static_cast<std::size_t>(grid.steps), Mat(path_count, model.noise_dim));

    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int p = 0; p < path_count; ++p) {
        const std::uint64_t key = rng::stream_key(seed, static_cast<std::uint64_t>(p));
        Vec x = model.x0;
        bundle.states[0].row(p) = x.transpose();
        for (int i = 0; i < grid.steps; ++i) {
            Vec dw(model.noise_dim);
            for (int c = 0; c < model.noise_dim; ++c) {
                dw[c] = sdt * rng::normal(key, static_cast<std::uint64_t>(i) * model.noise_dim + c);
            }
            const double t = grid.node(i);
            Vec b = model.drift(t, x);
            Mat s = model.diffusion(t, x);
            if (!b.allFinite() || !s.allFinite()) {
                std::ostringstream os;
                os << "forward simulation aborted: non-finite coefficients at t=" << t
                   << " on path " << p;
                throw NumericalError(os.str());
            }
            x = x + b * dt + s * dw;
            bundle.increments[static_cast<std::size_t>(i)].row(p) = dw.transpose();
            bundle.states[static_cast<std::size_t>(i) + 1].row(p) = x.transpose();
        }
    }
    return bundle;
}

Lattice::Lattice(const TimeGrid& grid, int noise_dim, std::size_t node_cap)
    : steps_(grid.steps), noise_dim_(noise_dim), dt_(grid.dt()), sqrt_dt_(std::sqrt(grid.dt())) {
    if (noise_dim_ < 1 || noise_dim_ > 16) {
        throw ValidationError("lattice noise dimension must be between 1 and 16");
    }
    std::size_t total = 0;
    for (int i = 0; i <= steps_; ++i) {
        std::size_t n = 1;
        for (int c = 0; c < noise_dim_; ++c) n *= static_cast<std::size_t>(i) + 1;
        total += n;
        if (total > node_cap) {
            std::ostringstream os;
            os << "lattice node cap exceeded: " << total << " > " << node_cap
               << " (reduce steps or noise dimension)";
            throw ValidationError(os.str());
        }
    }
    // Node probabilities by forward accumulation; every transition has mass 2^-k.
    probabilities_.resize(static_cast<std::size_t>(steps_) + 1);
    probabilities_[0] = Vec::Ones(1);
    const double pmove = 1.0 / static_cast<double>(move_count());
    for (int i = 0; i < steps_; ++i) {
        Vec next = Vec::Zero(node_count(i + 1));
        const Vec& cur = probabilities_[static_cast<std::size_t>(i)];
        for (int node = 0; node < node_count(i); ++node) {
            for (unsigned mask = 0; mask < static_cast<unsigned>(move_count()); ++mask) {
                next[child(i, node, mask)] += cur[node] * pmove;
            }
        }
        probabilities_[static_cast<std::size_t>(i) + 1] = std::move(next);
    }
}

int Lattice::node_count(int slice) const {
    int n = 1;
    for (int c = 0; c < noise_dim_; ++c) n *= slice + 1;
    return n;
}

void Lattice::decode(int slice, int node, int* ups) const {
    const int radix = slice + 1;
    for (int c = 0; c < noise_dim_; ++c) {
        ups[c] = node % radix;
        node /= radix;
    }
}

Vec Lattice::brownian(int slice, int node) const {
    int ups[16];
    decode(slice, node, ups);
    Vec w(noise_dim_);
    for (int c = 0; c < noise_dim_; ++c) {
        w[c] = (2.0 * ups[c] - slice) * sqrt_dt_;
    }
    return w;
}

int Lattice::child(int slice, int node, unsigned move_mask) const {
    int ups[16];
    decode(slice, node, ups);
    const int radix = slice + 2;
    int idx = 0;
    for (int c = noise_dim_ - 1; c >= 0; --c) {
        idx = idx * radix + ups[c] + ((move_mask >> c) & 1u);
    }
    return idx;
}

Vec Lattice::increment(unsigned move_mask) const {
    Vec dw(noise_dim_);
    for (int c = 0; c < noise_dim_; ++c) {
        dw[c] = ((move_mask >> c) & 1u) ? sqrt_dt_ : -sqrt_dt_;
    }
    return dw;
}

} // namespace orbsde::forward
