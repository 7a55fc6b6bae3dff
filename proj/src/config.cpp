#include "orbsde/config.hpp"

#include "orbsde/errors.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace orbsde::config {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Expression evaluator for the time-grid fields
// ---------------------------------------------------------------------------

namespace {

struct ExprParser {
    const std::string& text;
    std::size_t pos = 0;

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }
    bool eat(char c) {
        skip_ws();
        if (pos < text.size() && text[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    [[noreturn]] void fail() {
        throw ValidationError("malformed arithmetic expression: '" + text + "'");
    }

    double parse_expr() {
        double v = parse_term();
        for (;;) {
            if (eat('+')) v += parse_term();
            else if (eat('-')) v -= parse_term();
            else return v;
        }
    }
    double parse_term() {
        double v = parse_power();
        for (;;) {
            if (eat('*')) v *= parse_power();
            else if (eat('/')) v /= parse_power();
            else return v;
        }
    }
    double parse_power() {
        double base = parse_atom();
        if (eat('^')) {
            return std::pow(base, parse_power());
        }
        return base;
    }
    double parse_atom() {
        skip_ws();
        if (eat('(')) {
            double v = parse_expr();
            if (!eat(')')) fail();
            return v;
        }
        if (eat('-')) return -parse_atom();
        std::size_t start = pos;
        while (pos < text.size()
               && (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.'
                   || text[pos] == 'e' || text[pos] == 'E'
                   || ((text[pos] == '+' || text[pos] == '-') && pos > start
                       && (text[pos - 1] == 'e' || text[pos - 1] == 'E')))) {
            ++pos;
        }
        if (pos == start) fail();
        try {
            return std::stod(text.substr(start, pos - start));
        } catch (const std::exception&) {
            fail();
        }
    }
};

double number_or_expression(const json& j, const std::string& field) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return eval_expression(j.get<std::string>());
    throw ValidationError("field '" + field + "' must be a number or an arithmetic expression");
}

Vec vec_from(const json& j, const std::string& field) {
    if (!j.is_array()) throw ValidationError("field '" + field + "' must be an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
}

Mat mat_from(const json& j, const std::string& field) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw ValidationError("field '" + field + "' must be a matrix (array of arrays)");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols) {
            throw ValidationError("field '" + field + "' has ragged rows");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
        }
    }
    return m;
}

geometry::ConvexDomain domain_from_json(const json& j) {
    const std::string kind = j.value("kind", "");
    if (kind == "switching") {
        return geometry::ConvexDomain::switching_polytope(mat_from(j.at("costs"), "domain.costs"));
    }
    if (kind == "halfspaces") {
        Mat normals = mat_from(j.at("normals"), "domain.normals");
        Vec offsets = vec_from(j.at("offsets"), "domain.offsets");
        if (offsets.size() != normals.rows()) {
            throw ValidationError("domain.normals and domain.offsets disagree in size");
        }
        std::vector<geometry::Halfspace> hs(static_cast<std::size_t>(normals.rows()));
        for (Eigen::Index r = 0; r < normals.rows(); ++r) {
            hs[static_cast<std::size_t>(r)] = {normals.row(r).transpose(), offsets[r]};
        }
        return geometry::ConvexDomain::halfspace_intersection(static_cast<int>(normals.cols()), hs);
    }
    if (kind == "whole-space") {
        return geometry::ConvexDomain::whole_space(j.at("dim").get<int>());
    }
    if (kind == "ball") {
        return geometry::ConvexDomain::ball(vec_from(j.at("center"), "domain.center"),
                                            j.at("radius").get<double>());
    }
    throw ValidationError("domain.kind must be one of: switching, halfspaces, whole-space, ball");
}

reflection::ReflectionField reflection_from_json(const json& j, const geometry::ConvexDomain& domain) {
    const std::string name = j.value("name", "identity");
    if (name == "identity") return reflection::ReflectionField::identity(domain.dim());
    if (name == "switching") {
        if (domain.kind() != geometry::DomainKind::SwitchingPolytope) {
            throw ValidationError("reflection 'switching' requires a switching-polytope domain");
        }
        return reflection::ReflectionField::switching(domain.switching_costs());
    }
    if (name == "counterexample-wedge") return reflection::ReflectionField::counterexample_wedge();
    if (name == "user-matrix") {
        return reflection::ReflectionField::constant(mat_from(j.at("matrix"), "reflection.matrix"),
                                                     j.value("eta", 1e-3));
    }
    throw ValidationError("reflection.name must be one of: identity, switching, "
                          "counterexample-wedge, user-matrix");
}

forward::ForwardModel model_from_json(const json& j) {
    const std::string name = j.value("model", "brownian");
    if (name == "brownian") {
        if (j.contains("x0")) {
            Vec x0 = vec_from(j.at("x0"), "forward.x0");
            return forward::ForwardModel::brownian_from(x0, j.value("noise_dim", static_cast<int>(x0.size())));
        }
        return forward::ForwardModel::brownian(j.value("dim", 1));
    }
    if (name == "gbm") {
        return forward::ForwardModel::gbm(vec_from(j.at("x0"), "forward.x0"),
                                          j.at("mu").get<double>(), j.at("nu").get<double>());
    }
    if (name == "ou") {
        return forward::ForwardModel::ou(vec_from(j.at("x0"), "forward.x0"),
                                         j.at("kappa").get<double>(),
                                         vec_from(j.at("theta"), "forward.theta"),
                                         j.at("nu").get<double>());
    }
    throw ValidationError("forward.model must be one of: brownian, gbm, ou "
                          "(other models are registered through the library API)");
}

solver::DriverSpec driver_from_json(const json& j, int d) {
    const std::string name = j.value("name", "zero");
    solver::DriverSpec spec;
    spec.ydim = d;
    spec.name = name;
    if (name == "zero") {
        spec.f = [d](double, const Vec&, const Vec&, const Mat&) { return Vec::Zero(d); };
        spec.lip_L = 0.0;
        spec.alpha_hat = [](double, const Vec&) { return 0.0; };
        return spec;
    }
    if (name == "constant") {
        Vec c = vec_from(j.at("value"), "driver.value");
        if (c.size() != d) throw ValidationError("driver.value has the wrong dimension");
        spec.f = [c](double, const Vec&, const Vec&, const Mat&) { return c; };
        spec.lip_L = 0.0;
        spec.alpha_hat = [a = c.norm()](double, const Vec&) { return a; };
        return spec;
    }
    if (name == "counterexample-z") {
        if (d != 3) throw ValidationError("driver 'counterexample-z' requires dimension 3");
        spec.f = [](double, const Vec&, const Vec&, const Mat& z) {
            Vec f(3);
            f << -z(2, 0), -z(2, 0), 0.0;
            return f;
        };
        spec.lip_L = std::sqrt(2.0);
        spec.alpha_hat = [](double, const Vec&) { return 0.0; };
        return spec;
    }
    throw ValidationError("driver.name must be one of: zero, constant, counterexample-z "
                          "(other drivers are registered through the library API)");
}

solver::TerminalSpec terminal_from_json(const json& j, const geometry::ConvexDomain& domain) {
    const std::string name = j.value("name", "constant");
    solver::TerminalSpec spec;
    spec.name = name;
    if (name == "constant") {
        Vec c = vec_from(j.at("value"), "terminal.value");
        if (c.size() != domain.dim()) throw ValidationError("terminal.value has the wrong dimension");
        spec.g = [c](const Vec&) { return c; };
        return spec;
    }
    if (name == "project-linear") {
        Mat g = mat_from(j.at("matrix"), "terminal.matrix");
        Vec h = j.contains("offset") ? vec_from(j.at("offset"), "terminal.offset")
                                     : Vec(Vec::Zero(g.rows()));
        if (g.rows() != domain.dim() || h.size() != domain.dim()) {
            throw ValidationError("terminal.matrix/offset have the wrong dimension");
        }
        auto dom = domain;
        spec.g = [g, h, dom](const Vec& x) { return dom.project(g * x + h).first; };
        return spec;
    }
    throw ValidationError("terminal.name must be one of: constant, project-linear "
                          "(other terminal maps are registered through the library API)");
}

} // namespace

double eval_expression(const std::string& text) {
    ExprParser p{text};
    const double v = p.parse_expr();
    p.skip_ws();
    if (p.pos != text.size()) p.fail();
    return v;
}

solver::Scenario scenario_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("scenario file must hold a JSON object");
    const json& jd = j.at("domain");
    auto domain = domain_from_json(jd);
    auto field = reflection_from_json(j.value("reflection", json{{"name", "identity"}}), domain);

    solver::Scenario scn(std::move(domain), std::move(field));

    const json& jg = j.at("grid");
    scn.grid.horizon = number_or_expression(jg.at("T"), "grid.T");
    scn.grid.steps = static_cast<int>(std::llround(number_or_expression(jg.at("N"), "grid.N")));
    if (scn.grid.steps < 1 || !(scn.grid.horizon > 0.0)) {
        throw ValidationError("grid.T must be positive and grid.N at least 1");
    }

    scn.model = model_from_json(j.value("forward", json{{"model", "brownian"}, {"dim", 1}}));
    scn.driver = driver_from_json(j.value("driver", json{{"name", "zero"}}), scn.domain.dim());
    scn.terminal = terminal_from_json(j.at("terminal"), scn.domain);

    if (j.contains("penalty")) {
        const json& jp = j.at("penalty");
        if (jp.contains("schedule")) {
            scn.schedule.clear();
            for (const auto& v : jp.at("schedule")) scn.schedule.push_back(v.get<double>());
        }
        if (jp.contains("M")) {
            if (jp.at("M").is_string() && jp.at("M").get<std::string>() == "unbounded") {
                scn.penalty_M = std::numeric_limits<double>::infinity();
            } else {
                scn.penalty_M = jp.at("M").get<double>(); // <= 0 selects the automatic choice
            }
        }
    }
    if (j.contains("solver")) {
        const json& js = j.at("solver");
        const std::string engine = js.value("engine", "lattice");
        if (engine == "lattice") scn.engine = solver::EngineKind::Lattice;
        else if (engine == "regression") scn.engine = solver::EngineKind::Regression;
        else throw ValidationError("solver.engine must be 'lattice' or 'regression'");
        scn.path_count = js.value("paths", scn.path_count);
        scn.basis_degree = js.value("degree", scn.basis_degree);
    }
    if (j.contains("picard")) {
        scn.picard.tol = j.at("picard").value("tol", scn.picard.tol);
        scn.picard.cap = j.at("picard").value("cap", scn.picard.cap);
    }
    scn.seed = j.value("seed", scn.seed);

    // Keep the implicit per-step solve contractive for the finest entry.
    if (!scn.schedule.empty()) {
        scn.grid.steps = solver::recommended_steps(scn.grid.horizon, scn.grid.steps,
                                                   scn.schedule.back());
    }
    return scn;
}

solver::Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open scenario file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("scenario file is not valid JSON: ") + e.what());
    }
    return scenario_from_json(j);
}

nlohmann::json scenario_echo(const nlohmann::json& original) { return original; }

} // namespace orbsde::config
