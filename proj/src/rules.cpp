#include "dtd/rules.hpp"

#include <cmath>
#include <cstdio>

namespace dtd {

RuleKind RuleKind::eps(double e) {
    if (!(e > 0.0)) throw DtdError("epsilon must be positive");
    return {RuleTag::Epsilon, e, 0.0};
}

RuleKind RuleKind::gamma_rule(double g) {
    if (!(g >= 0.0)) throw DtdError("gamma must be nonnegative");
    return {RuleTag::Gamma, 0.0, g};
}

RuleKind parse_rule(const std::string& text) {
    if (text == "lrp0") return RuleKind::lrp0();
    if (text == "w2") return RuleKind::w2();
    if (text == "zplus") return RuleKind::zplus();
    if (text == "ab:1:0") return RuleKind::zplus();
    if (text.rfind("eps:", 0) == 0) {
        try {
            return RuleKind::eps(std::stod(text.substr(4)));
        } catch (const std::logic_error&) {
            throw DtdError("bad epsilon in rule string: '" + text + "'");
        }
    }
    if (text.rfind("gamma:", 0) == 0) {
        try {
            return RuleKind::gamma_rule(std::stod(text.substr(6)));
        } catch (const std::logic_error&) {
            throw DtdError("bad gamma in rule string: '" + text + "'");
        }
    }
    throw DtdError("unknown rule string: '" + text +
                   "' (expected lrp0, eps:<e>, w2, zplus, gamma:<g>, ab:1:0)");
}

std::string rule_name(const RuleKind& rule) {
    char buf[64];
    switch (rule.tag) {
        case RuleTag::LRP0: return "lrp0";
        case RuleTag::W2: return "w2";
        case RuleTag::ZPlus: return "zplus";
        case RuleTag::Epsilon:
            std::snprintf(buf, sizeof(buf), "eps:%g", rule.epsilon);
            return buf;
        case RuleTag::Gamma:
            std::snprintf(buf, sizeof(buf), "gamma:%g", rule.gamma);
            return buf;
    }
    return "lrp0";
}

Vec search_direction(const RuleKind& rule, const Vec& w_j, const Vec& a_l) {
    if (w_j.size() != a_l.size()) throw ShapeError("search_direction: size mismatch");
    switch (rule.tag) {
        case RuleTag::W2:
            return w_j;
        case RuleTag::ZPlus: {
            Vec v(a_l.size());
            for (size_t i = 0; i < v.size(); ++i) v[i] = w_j[i] >= 0.0 ? a_l[i] : 0.0;
            return v;
        }
        case RuleTag::Gamma: {
            Vec v(a_l.size());
            for (size_t i = 0; i < v.size(); ++i) {
                v[i] = a_l[i] * (w_j[i] >= 0.0 ? 1.0 + rule.gamma : 1.0);
            }
            return v;
        }
        case RuleTag::LRP0:
        case RuleTag::Epsilon:
            return a_l;
    }
    return a_l;
}

namespace {

RootPoint make_root(const RuleKind& rule, const Vec& w_j, double b_j, const Vec& a_l,
                    Vec v, double t) {
    RootPoint root;
    root.direction = std::move(v);
    root.t = t;
    root.point.resize(a_l.size());
    for (size_t i = 0; i < a_l.size(); ++i) root.point[i] = a_l[i] - t * root.direction[i];
    root.residual = dot(w_j, root.point) + b_j;
    (void)rule;
    return root;
}

}  // namespace

RootPoint find_root_linear(const RuleKind& rule, const Vec& w_j, double b_j, const Vec& a_l) {
    if (w_j.size() != a_l.size()) throw ShapeError("find_root_linear: size mismatch");
    if (!all_finite(a_l)) throw DtdError("find_root_linear: non-finite input");

    if (rule.tag == RuleTag::LRP0 || rule.tag == RuleTag::Epsilon) {
        // x~ = 0 regardless of direction; reached along v = a_l with t = 1.
        RootPoint root;
        root.direction = a_l;
        root.t = 1.0;
        root.point.assign(a_l.size(), 0.0);
        root.residual = b_j;
        return root;
    }

    Vec v = search_direction(rule, w_j, a_l);
    const double wv = dot(w_j, v);
    if (std::fabs(wv) < kDenomTol) {
        throw OrthogonalDirectionError("search direction orthogonal to weight row (w.v = " +
                                       std::to_string(wv) + ")");
    }
    const double z = dot(w_j, a_l) + b_j;
    if (z == 0.0) {
        RootPoint root = make_root(rule, w_j, b_j, a_l, std::move(v), 0.0);
        root.zero_relevance = true;
        return root;
    }
    return make_root(rule, w_j, b_j, a_l, std::move(v), z / wv);
}

RootPoint find_root_train_free(const RuleKind& rule, const Vec& w_j, double b_j,
                               const Vec& a_l, double relevance_j) {
    if (w_j.size() != a_l.size()) throw ShapeError("find_root_train_free: size mismatch");
    if (!all_finite(a_l)) throw DtdError("find_root_train_free: non-finite input");

    Vec v = search_direction(rule, w_j, a_l);
    if (relevance_j == 0.0) {
        RootPoint root = make_root(rule, w_j, b_j, a_l, std::move(v), 0.0);
        root.zero_relevance = true;
        return root;
    }
    const double wv = dot(w_j, v);
    if (std::fabs(wv) < kDenomTol) {
        throw OrthogonalDirectionError("search direction orthogonal to weight row (w.v = " +
                                       std::to_string(wv) + ")");
    }
    return make_root(rule, w_j, b_j, a_l, std::move(v), relevance_j / wv);
}

Vec propagate_closed_form(const RuleKind& rule, const Matrix& weights, const Vec& bias,
                          const Vec& a_l, const Vec& relevance_upper) {
    if (weights.cols != a_l.size()) throw ShapeError("propagate: input dim mismatch");
    if (weights.rows != bias.size()) throw ShapeError("propagate: bias dim mismatch");
    if (relevance_upper.size() != weights.rows) throw ShapeError("propagate: relevance dim mismatch");

    Vec result(a_l.size(), 0.0);
    for (size_t j = 0; j < weights.rows; ++j) {
        const double r_j = relevance_upper[j];
        if (r_j == 0.0) continue;
        const Vec w_j = weights.row(j);

        if (rule.tag == RuleTag::LRP0 || rule.tag == RuleTag::Epsilon) {
            double denom = dot(w_j, a_l) + bias[j];
            if (rule.tag == RuleTag::Epsilon) denom += rule.epsilon * sign_plus(denom);
            if (std::fabs(denom) < kDenomTol) {
                throw DegenerateDenominatorError("z_j ~ 0 with nonzero relevance at neuron " +
                                                 std::to_string(j));
            }
            const double scale = r_j / denom;
            for (size_t i = 0; i < result.size(); ++i) result[i] += a_l[i] * w_j[i] * scale;
        } else {
            const Vec v = search_direction(rule, w_j, a_l);
            const double wv = dot(w_j, v);
            if (std::fabs(wv) < kDenomTol) {
                throw DegenerateDenominatorError("w.v ~ 0 with nonzero relevance at neuron " +
                                                 std::to_string(j));
            }
            const double scale = r_j / wv;
            for (size_t i = 0; i < result.size(); ++i) result[i] += w_j[i] * v[i] * scale;
        }
    }
    return result;
}

}  // namespace dtd
