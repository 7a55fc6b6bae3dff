#include "orbsde/reflection.hpp"

#include "orbsde/errors.hpp"
#include "orbsde/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace orbsde::reflection {

ReflectionField::ReflectionField(int ydim, EvalFn evaluate, double bound_L, double obliqueness_eta,
                                 Continuity continuity, DiscontinuityFn near_discontinuity)
    : ydim_(ydim),
      evaluate_(std::move(evaluate)),
      bound_L_(bound_L),
      obliqueness_eta_(obliqueness_eta),
      continuity_(continuity),
      near_discontinuity_(std::move(near_discontinuity)) {
    if (ydim_ < 1) throw ValidationError("reflection field dimension must be >= 1");
    if (!(obliqueness_eta_ > 0.0)) throw ValidationError("obliqueness eta must be > 0");
    if (!(bound_L_ > 0.0)) throw ValidationError("reflection bound L must be > 0");
}

Mat ReflectionField::evaluate(double t, const Vec& x, const Vec& y, const Mat& z) const {
    return evaluate_(t, x, y, z);
}

bool ReflectionField::near_discontinuity(double t, const Vec& x, const Vec& y) const {
    return near_discontinuity_ && near_discontinuity_(t, x, y);
}

ReflectionField ReflectionField::identity(int d) {
    Mat id = Mat::Identity(d, d);
    return ReflectionField(
        d, [id](double, const Vec&, const Vec&, const Mat&) { return id; },
        1.0, 1.0, Continuity::Smooth);
}

ReflectionField ReflectionField::constant(Mat h, double obliqueness_eta) {
    if (h.rows() != h.cols() || h.rows() < 1) throw ValidationError("constant reflection matrix must be square");
    const int d = static_cast<int>(h.rows());
    const double bound = std::max(1e-12, h.operatorNorm());
    Mat hc = std::move(h);
    return ReflectionField(
        d, [hc](double, const Vec&, const Vec&, const Mat&) { return hc; },
        bound * 1.0000001, obliqueness_eta, Continuity::Smooth);
}

// ---------------------------------------------------------------------------
// SwitchingH
// ---------------------------------------------------------------------------

namespace {
constexpr double kGeoTol = 1e-9;
}

SwitchingH build_switching_h(const Mat& costs) { return SwitchingH(costs); }

SwitchingH::SwitchingH(const Mat& costs) : costs_(costs) {
    geometry::check_switching_structure(costs_);
    dim_ = static_cast<int>(costs_.rows());
    if (dim_ < 2) throw ValidationError("switching reflection needs dimension >= 2");
    const int m = dim_ - 1;

    // Slice-space constraints: coordinates u_0..u_{m-1} stand for
    // y^0..y^{m-1} with y^{d-1} pinned to zero.
    auto embedded = [&](int i) {
        Vec e = Vec::Zero(m);
        if (i < m) e[i] = 1.0;
        return e;
    };
    std::vector<geometry::Halfspace> hs;
    for (int l = 0; l < dim_; ++l) {
        for (int j = 0; j < dim_; ++j) {
            if (j == l) continue;
            pairs_.emplace_back(l, j);
            Vec a = embedded(l) - embedded(j);
            normals_.push_back(a);
            offsets_.push_back(-costs_(l, j));
            hs.push_back({a, -costs_(l, j)});
        }
    }
    slice_domain_ = std::make_shared<geometry::ConvexDomain>(
        geometry::ConvexDomain::halfspace_intersection(m, hs));

    // Vertex enumeration: exhaustive over m-subsets of constraints.
    const int nc = static_cast<int>(pairs_.size());
    std::vector<int> subset;
    std::vector<Vec> points;
    std::function<void(int)> rec = [&](int start) {
        if (static_cast<int>(subset.size()) == m) {
            Mat A(m, m);
            Vec b(m);
            for (int r = 0; r < m; ++r) {
                A.row(r) = normals_[static_cast<std::size_t>(subset[static_cast<std::size_t>(r)])].transpose();
                b[r] = offsets_[static_cast<std::size_t>(subset[static_cast<std::size_t>(r)])];
            }
            Eigen::FullPivLU<Mat> lu(A);
            lu.setThreshold(1e-9);
            if (lu.rank() < m) return;
            Vec v = lu.solve(b);
            for (int c = 0; c < nc; ++c) {
                if (margin(c, v) < -kGeoTol * (1.0 + v.norm())) return;
            }
            for (const auto& p : points) {
                if ((p - v).norm() <= kGeoTol * (1.0 + v.norm())) return; // duplicate
            }
            points.push_back(v);
            return;
        }
        for (int c = start; c < nc; ++c) {
            subset.push_back(c);
            rec(c + 1);
            subset.pop_back();
        }
    };
    rec(0);
    if (points.empty()) {
        throw ValidationError("switching polytope is degenerate: no extremal points found");
    }

    for (const auto& v : points) {
        VertexEntry entry;
        entry.point = v;
        std::uint64_t mask = active_mask_at(v, kGeoTol * (1.0 + v.norm()));
        std::set<int> lefts, rights;
        for (int c = 0; c < nc; ++c) {
            if (mask & (1ULL << c)) {
                entry.active_pairs.push_back(pairs_[static_cast<std::size_t>(c)]);
                lefts.insert(pairs_[static_cast<std::size_t>(c)].first);
                rights.insert(pairs_[static_cast<std::size_t>(c)].second);
            }
        }
        for (int l : lefts) {
            if (rights.count(l)) {
                throw ValidationError("switching polytope is degenerate: a vertex mixes "
                                      "left and right indices of its active facets");
            }
        }
        entry.projector = Mat::Zero(dim_, dim_);
        for (int l : lefts) entry.projector(l, l) = 1.0;
        vertices_.push_back(std::move(entry));
        vertex_active_.push_back(mask);
    }

    // Affine-hull rank check: a full-dimensional slice is expected.
    if (m >= 1) {
        Mat span(static_cast<Eigen::Index>(points.size()) - 1, m);
        for (Eigen::Index r = 0; r + 1 < static_cast<Eigen::Index>(points.size()); ++r) {
            span.row(r) = (points[static_cast<std::size_t>(r) + 1] - points[0]).transpose();
        }
        if (span.rows() < m || Eigen::FullPivLU<Mat>(span).rank() < m) {
            throw ValidationError("switching polytope is degenerate: slice has empty interior");
        }
    }
}

double SwitchingH::margin(int c, const Vec& u) const {
    return normals_[static_cast<std::size_t>(c)].dot(u) - offsets_[static_cast<std::size_t>(c)];
}

std::uint64_t SwitchingH::active_mask_at(const Vec& u, double tol) const {
    std::uint64_t mask = 0;
    for (int c = 0; c < constraint_count(); ++c) {
        if (std::abs(margin(c, u)) <= tol * normals_[static_cast<std::size_t>(c)].norm()) {
            mask |= (1ULL << c);
        }
    }
    return mask;
}

std::vector<int> SwitchingH::facet_vertices(int c) const {
    std::vector<int> out;
    for (std::size_t v = 0; v < vertices_.size(); ++v) {
        if (vertex_active_[v] & (1ULL << c)) out.push_back(static_cast<int>(v));
    }
    return out;
}

namespace {
bool lex_less(const Vec& a, const Vec& b) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a[i] < b[i] - 1e-12) return true;
        if (a[i] > b[i] + 1e-12) return false;
    }
    return false;
}
} // namespace

// Barycentric weights within the pulling triangulation: cone from the
// lexicographically smallest vertex of the current face onto the exit face
// of the ray through the query point.
std::map<int, double> SwitchingH::walk(std::uint64_t active_mask, const Vec& point) const {
    std::vector<int> face_vertices;
    for (std::size_t v = 0; v < vertices_.size(); ++v) {
        if ((vertex_active_[v] & active_mask) == active_mask) face_vertices.push_back(static_cast<int>(v));
    }
    if (face_vertices.empty()) {
        throw NumericalError("switching interpolation failed: query point off the polytope face lattice");
    }
    if (face_vertices.size() == 1) {
        return {{face_vertices[0], 1.0}};
    }
    int anchor = face_vertices[0];
    for (int v : face_vertices) {
        if (lex_less(vertices_[static_cast<std::size_t>(v)].point,
                     vertices_[static_cast<std::size_t>(anchor)].point)) {
            anchor = v;
        }
    }
    const Vec& a0 = vertices_[static_cast<std::size_t>(anchor)].point;
    const double scale = 1.0 + point.norm() + a0.norm();
    Vec dir = point - a0;
    if (dir.norm() <= kGeoTol * scale) {
        return {{anchor, 1.0}};
    }

    double s_exit = std::numeric_limits<double>::infinity();
    std::uint64_t blockers = 0;
    for (int c = 0; c < constraint_count(); ++c) {
        if (active_mask & (1ULL << c)) continue;
        const double den = normals_[static_cast<std::size_t>(c)].dot(dir);
        if (den < -1e-14 * scale) {
            const double s = (offsets_[static_cast<std::size_t>(c)]
                              - normals_[static_cast<std::size_t>(c)].dot(a0)) / den;
            if (s < s_exit - 1e-12 * scale) {
                s_exit = s;
                blockers = 1ULL << c;
            } else if (s <= s_exit + 1e-12 * scale) {
                blockers |= 1ULL << c;
            }
        }
    }
    if (!std::isfinite(s_exit)) {
        throw NumericalError("switching interpolation failed: unbounded ray inside a compact polytope");
    }
    s_exit = std::max(s_exit, 1.0);
    Vec q = a0 + s_exit * dir;
    std::uint64_t next_mask = active_mask | blockers | active_mask_at(q, kGeoTol * (1.0 + q.norm()));
    if (next_mask == active_mask) {
        throw NumericalError("switching interpolation failed: exit face detection stalled");
    }
    std::map<int, double> inner = walk(next_mask, q);
    const double lambda = 1.0 / s_exit;
    std::map<int, double> out;
    out[anchor] = 1.0 - lambda;
    for (const auto& [v, w] : inner) out[v] += lambda * w;
    return out;
}

std::map<int, double> SwitchingH::barycentric_weights(const Vec& u) const {
    if (u.size() != dim_ - 1) throw ValidationError("slice point has wrong dimension");
    return walk(active_mask_at(u, kGeoTol * (1.0 + u.norm())), u);
}

std::map<int, double> SwitchingH::barycentric_weights_on_face(const std::vector<int>& seed_active,
                                                              const Vec& u) const {
    std::uint64_t mask = 0;
    for (int c : seed_active) {
        if (c < 0 || c >= constraint_count()) throw ValidationError("bad constraint index");
        if (std::abs(margin(c, u)) > 1e-7 * (1.0 + u.norm())) {
            throw ValidationError("seed face does not contain the query point");
        }
        mask |= (1ULL << c);
    }
    return walk(mask, u);
}

Mat SwitchingH::evaluate_slice(const Vec& u_raw) const {
    Vec u = slice_domain_->project(u_raw).first;
    Mat h = Mat::Zero(dim_, dim_);
    for (const auto& [v, w] : barycentric_weights(u)) {
        h += w * vertices_[static_cast<std::size_t>(v)].projector;
    }
    return h;
}

Mat SwitchingH::evaluate(const Vec& y) const {
    if (y.size() != dim_) throw ValidationError("switching reflection: point has wrong dimension");
    Vec u(dim_ - 1);
    for (int i = 0; i + 1 < dim_; ++i) u[i] = y[i] - y[dim_ - 1];
    return evaluate_slice(u);
}

ReflectionField ReflectionField::switching(const Mat& costs) {
    auto h = std::make_shared<SwitchingH>(costs);
    const int d = h->dim();

    // Measured obliqueness floor over vertex projectors against sampled
    // normal-cone directions of the full domain.
    double eta = std::numeric_limits<double>::infinity();
    std::uint64_t key = rng::stream_key(0xEDA0ULL, 1);
    std::uint64_t ctr = 0;
    for (const auto& vert : h->vertices()) {
        std::vector<Vec> gens;
        for (const auto& [l, j] : vert.active_pairs) {
            Vec g = Vec::Zero(d);
            g[l] = -1.0;
            g[j] = 1.0;
            gens.push_back(g / std::sqrt(2.0));
        }
        for (int s = 0; s < 64; ++s) {
            Vec ups = Vec::Zero(d);
            if (s < static_cast<int>(gens.size())) {
                ups = gens[static_cast<std::size_t>(s)];
            } else {
                for (const auto& g : gens) {
                    ups += rng::uniform01(rng::prf(key, ctr++)) * g;
                }
            }
            const double n = ups.norm();
            if (n < 1e-12) continue;
            ups /= n;
            eta = std::min(eta, ups.dot(vert.projector * ups));
        }
    }
    if (!std::isfinite(eta) || eta <= 0.0) eta = 1e-6;

    return ReflectionField(
        d,
        [h](double, const Vec&, const Vec& y, const Mat&) { return h->evaluate(y); },
        1.0 + 1e-9, 0.999 * eta, Continuity::Continuous);
}

ReflectionField ReflectionField::counterexample_wedge() {
    // Domain {y1 >= 0, y1 + y2 >= 0} in R^3 as a shared projection target.
    std::vector<geometry::Halfspace> hs(2);
    hs[0].a = Vec::Zero(3); hs[0].a[0] = 1.0; hs[0].b = 0.0;
    hs[1].a = Vec::Zero(3); hs[1].a[0] = 1.0; hs[1].a[1] = 1.0; hs[1].b = 0.0;
    auto wedge = std::make_shared<geometry::ConvexDomain>(
        geometry::ConvexDomain::halfspace_intersection(3, hs));

    Mat oblique(3, 3);
    oblique << 1.0, 0.0, 0.0,
              -0.5, 0.5, 0.0,
               0.0, 0.0, 1.0; // sends (1,1,0) to (1,0,0), identity on its orthogonal complement
    Mat id = Mat::Identity(3, 3);

    auto eval = [wedge, oblique, id](double, const Vec&, const Vec& y, const Mat&) {
        Vec p = wedge->project(y).first;
        const double tol = kGeoTol * (1.0 + p.norm());
        const bool on_f1 = std::abs(p[0]) <= tol;
        const bool on_f2 = std::abs(p[0] + p[1]) <= tol * std::sqrt(2.0);
        if (on_f2 && !on_f1) return oblique;
        return id;
    };
    auto near_corner = [wedge](double, const Vec&, const Vec& y) {
        Vec p = wedge->project(y).first;
        const double tol = 1e-6 * (1.0 + p.norm());
        return std::abs(p[0]) <= tol && std::abs(p[1]) <= tol;
    };
    return ReflectionField(3, eval, 1.5, 0.5, Continuity::Discontinuous, near_corner);
}

// ---------------------------------------------------------------------------
// Validators
// ---------------------------------------------------------------------------

namespace {

Vec gaussian_vec(std::uint64_t key, std::uint64_t& ctr, int dim) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng::normal(key, ctr++);
    return v;
}

// Unit directions inside the cone: generators plus random nonnegative mixes.
std::vector<Vec> cone_directions(const geometry::NormalConeSample& cone,
                                 std::uint64_t key, std::uint64_t& ctr, int mixes) {
    std::vector<Vec> dirs = cone.generators;
    if (cone.generators.size() > 1) {
        for (int s = 0; s < mixes; ++s) {
            Vec u = Vec::Zero(cone.generators.front().size());
            for (const auto& g : cone.generators) {
                u += rng::uniform01(rng::prf(key, ctr++)) * g;
            }
            const double n = u.norm();
            if (n > 1e-12) dirs.push_back(u / n);
        }
    }
    return dirs;
}

} // namespace

ObliquenessReport validate_obliqueness(const ReflectionField& field,
                                       const geometry::ConvexDomain& domain,
                                       int sample_count, std::uint64_t seed) {
    ObliquenessReport report;
    report.eta_hat = std::numeric_limits<double>::infinity();
    const int d = domain.dim();
    const Vec center = domain.interior_point();
    const double radius = 2.0 * (1.0 + center.norm());
    const Vec x_dummy(0);
    const Mat z_dummy = Mat::Zero(d, 1);
    const double t_samples[3] = {0.0, 0.5, 1.0};

    std::uint64_t key = rng::stream_key(seed, 0);
    std::uint64_t ctr = 0;
    int produced = 0;
    for (int attempt = 0; attempt < 20 * sample_count && produced < sample_count; ++attempt) {
        Vec raw = center + radius * gaussian_vec(key, ctr, d);
        auto [p, dist] = domain.project(raw);
        if (dist <= 1e-12 * (1.0 + raw.norm())) continue; // landed inside, no boundary point
        bool skip = false;
        for (double t : t_samples) {
            if (field.near_discontinuity(t, x_dummy, p)) { skip = true; break; }
        }
        if (skip) continue;
        auto cone = domain.normal_cone(p, geometry::default_tol(p));
        if (cone.generators.empty()) continue;
        auto dirs = cone_directions(cone, key, ctr, 4);
        for (double t : t_samples) {
            Mat h = field.evaluate(t, x_dummy, p, z_dummy);
            for (const auto& ups : dirs) {
                const double value = ups.dot(h * ups);
                report.eta_hat = std::min(report.eta_hat, value);
                if (value < field.obliqueness_eta() - 1e-9) {
                    report.violations.push_back({p, ups, value});
                }
            }
        }
        ++produced;
    }
    report.samples_used = produced;
    if (!std::isfinite(report.eta_hat)) report.eta_hat = 0.0;
    return report;
}

bool limiting_cone_membership(const ReflectionField& field, const geometry::ConvexDomain& domain,
                              double t, const Vec& x, const Vec& y, const Mat& z,
                              const Vec& psi, double eps, double tol, std::uint64_t seed) {
    const auto region = domain.contains(y, tol);
    if (region == geometry::Region::Exterior) {
        throw ValidationError("limiting cone queried at a point outside the closed domain beyond tolerance");
    }
    if (region == geometry::Region::Interior) {
        return psi.norm() <= tol;
    }
    if (psi.norm() <= tol) return true;

    Vec p = domain.project(y).first;
    auto cone = domain.normal_cone(p, geometry::default_tol(p));
    if (cone.generators.empty()) return false;

    std::uint64_t key = rng::stream_key(seed, 3);
    std::uint64_t ctr = 0;
    std::vector<Vec> columns;
    const int ball_samples = 48;
    for (int s = 0; s <= ball_samples; ++s) {
        Vec yt = y;
        Mat zt = z;
        if (s > 0) {
            Vec dy = gaussian_vec(key, ctr, static_cast<int>(y.size()));
            const double r = eps * rng::uniform01(rng::prf(key, ctr++));
            if (dy.norm() > 1e-14) yt = y + r * dy / dy.norm();
            for (Eigen::Index c = 0; c < zt.cols(); ++c) {
                for (Eigen::Index rr = 0; rr < zt.rows(); ++rr) {
                    zt(rr, c) += eps * (rng::uniform01(rng::prf(key, ctr++)) - 0.5);
                }
            }
        }
        Mat h = field.evaluate(t, x, yt, zt);
        for (const auto& g : cone.generators) {
            Vec v = h * g;
            if (v.norm() > 1e-14) columns.push_back(v);
        }
    }
    if (columns.empty()) return false;
    Mat G(psi.size(), static_cast<Eigen::Index>(columns.size()));
    for (Eigen::Index c = 0; c < G.cols(); ++c) G.col(c) = columns[static_cast<std::size_t>(c)];
    return nnls_residual(G, psi / psi.norm()) <= tol;
}

} // namespace orbsde::reflection
