#include "transim/po_model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "transim/special_functions.hpp"

namespace transim {

namespace {

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Per-arm quantities at linear predictors eta_k = alpha_k - beta * x.
struct ArmTerms {
    std::vector<double> cdf;   // F_k, k < K'-1
    std::vector<double> dens;  // f_k = F_k (1 - F_k)
    std::vector<double> prob;  // pi_j, j < K'
};

ArmTerms arm_terms(const Eigen::VectorXd& theta, double x) {
    const std::size_t cuts = static_cast<std::size_t>(theta.size()) - 1;
    const double beta = theta[static_cast<Eigen::Index>(cuts)];
    ArmTerms t;
    t.cdf.resize(cuts);
    t.dens.resize(cuts);
    t.prob.resize(cuts + 1);
    for (std::size_t k = 0; k < cuts; ++k) {
        const double eta = theta[static_cast<Eigen::Index>(k)] - beta * x;
        t.cdf[k] = logistic(eta);
        t.dens[k] = t.cdf[k] * logistic(-eta);
    }
    t.prob[0] = t.cdf[0];
    for (std::size_t j = 1; j < cuts; ++j) t.prob[j] = t.cdf[j] - t.cdf[j - 1];
    // 1 - F computed without cancellation.
    t.prob[cuts] = logistic(-(theta[static_cast<Eigen::Index>(cuts - 1)] - beta * x));
    return t;
}

double arm_loglik(const ArmTerms& t, const ArmCounts& arm) {
    double ll = 0.0;
    for (std::size_t j = 0; j < t.prob.size(); ++j) {
        if (arm.counts[j] == 0) continue;
        if (!(t.prob[j] > 0.0)) return -std::numeric_limits<double>::infinity();
        ll += static_cast<double>(arm.counts[j]) * std::log(t.prob[j]);
    }
    return ll;
}

// n_j / pi_j, zero when n_j = 0.
double ratio(const ArmCounts& arm, const ArmTerms& t, std::size_t j, int power) {
    if (arm.counts[j] == 0) return 0.0;
    const double p = power == 1 ? t.prob[j] : t.prob[j] * t.prob[j];
    return static_cast<double>(arm.counts[j]) / p;
}

// Score with respect to the linear predictors eta_k.
Eigen::VectorXd eta_score(const ArmTerms& t, const ArmCounts& arm) {
    const std::size_t cuts = t.cdf.size();
    Eigen::VectorXd g(static_cast<Eigen::Index>(cuts));
    for (std::size_t k = 0; k < cuts; ++k) {
        g[static_cast<Eigen::Index>(k)] = t.dens[k] * (ratio(arm, t, k, 1) - ratio(arm, t, k + 1, 1));
    }
    return g;
}

// Hessian with respect to eta; tridiagonal.
Eigen::MatrixXd eta_hessian(const ArmTerms& t, const ArmCounts& arm) {
    const std::size_t cuts = t.cdf.size();
    const auto n = static_cast<Eigen::Index>(cuts);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t k = 0; k < cuts; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        const double f = t.dens[k];
        const double df = f * (1.0 - 2.0 * t.cdf[k]);
        h(i, i) = df * (ratio(arm, t, k, 1) - ratio(arm, t, k + 1, 1)) -
                  f * f * (ratio(arm, t, k, 2) + ratio(arm, t, k + 1, 2));
        if (k + 1 < cuts) {
            h(i, i + 1) = f * t.dens[k + 1] * ratio(arm, t, k + 1, 2);
            h(i + 1, i) = h(i, i + 1);
        }
    }
    return h;
}

// LDLT of the negated Hessian; nullopt when not positive definite.
std::optional<Eigen::LDLT<Eigen::MatrixXd>> information_factor(const Eigen::MatrixXd& hessian) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(-hessian);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
    if ((ldlt.vectorD().array() <= 0.0).any()) return std::nullopt;
    return ldlt;
}

}  // namespace

PoLikelihood::PoLikelihood(ArmCounts control, ArmCounts intervention)
    : control_(std::move(control)), intervention_(std::move(intervention)) {
    if (control_.categories() != intervention_.categories() || control_.categories() < 2) {
        throw std::invalid_argument("PoLikelihood needs two arms with K' >= 2 categories");
    }
}

double PoLikelihood::loglik(const Eigen::VectorXd& theta) const {
    return arm_loglik(arm_terms(theta, 0.0), control_) + arm_loglik(arm_terms(theta, 1.0), intervention_);
}

Eigen::VectorXd PoLikelihood::score(const Eigen::VectorXd& theta) const {
    const Eigen::Index cuts = theta.size() - 1;
    const Eigen::VectorXd gc = eta_score(arm_terms(theta, 0.0), control_);
    const Eigen::VectorXd gi = eta_score(arm_terms(theta, 1.0), intervention_);
    Eigen::VectorXd g(theta.size());
    g.head(cuts) = gc + gi;
    g[cuts] = -gi.sum();
    return g;
}

Eigen::MatrixXd PoLikelihood::hessian(const Eigen::VectorXd& theta) const {
    const Eigen::Index cuts = theta.size() - 1;
    const Eigen::MatrixXd hc = eta_hessian(arm_terms(theta, 0.0), control_);
    const Eigen::MatrixXd hi = eta_hessian(arm_terms(theta, 1.0), intervention_);
    Eigen::MatrixXd h(theta.size(), theta.size());
    h.topLeftCorner(cuts, cuts) = hc + hi;
    const Eigen::VectorXd cross = -hi.rowwise().sum();
    h.topRightCorner(cuts, 1) = cross;
    h.bottomLeftCorner(1, cuts) = cross.transpose();
    h(cuts, cuts) = hi.sum();
    return h;
}

double PoLikelihood::null_loglik() const {
    const double total = static_cast<double>(control_.n() + intervention_.n());
    double ll = 0.0;
    for (std::size_t j = 0; j < control_.categories(); ++j) {
        const double t = static_cast<double>(control_.counts[j] + intervention_.counts[j]);
        if (t > 0.0) ll += t * std::log(t / total);
    }
    return ll;
}

Eigen::VectorXd PoLikelihood::initial_point() const {
    const std::size_t k = control_.categories();
    const double total = static_cast<double>(control_.n() + intervention_.n());
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    double cum = 0.0;
    for (std::size_t j = 0; j + 1 < k; ++j) {
        cum += static_cast<double>(control_.counts[j] + intervention_.counts[j]);
        const double upper = total - cum;
        theta[static_cast<Eigen::Index>(j)] = std::log(cum / upper);
    }
    return theta;
}

std::optional<PoFit> fit_proportional_odds(const ArmCounts& control, const ArmCounts& intervention,
                                           const PoFitOptions& options) {
    auto [ka, kb] = drop_empty_categories(control, intervention);
    if (ka.categories() < 2 || ka.n() == 0 || kb.n() == 0) return std::nullopt;

    const PoLikelihood model(std::move(ka), std::move(kb));
    const Eigen::Index beta_index = static_cast<Eigen::Index>(model.parameters()) - 1;

    Eigen::VectorXd theta = model.initial_point();
    double ll = model.loglik(theta);
    PoFit fit;
    fit.null_loglik = model.null_loglik();

    bool converged = false;
    bool separated = false;
    int iter = 0;
    for (; iter < options.max_iterations; ++iter) {
        const Eigen::VectorXd g = model.score(theta);
        if (g.cwiseAbs().maxCoeff() < options.score_tolerance) {
            converged = true;
            break;
        }
        const Eigen::MatrixXd h = model.hessian(theta);
        Eigen::VectorXd step;
        if (auto factor = information_factor(h)) {
            step = factor->solve(g);
        } else {
            // Levenberg-style ridge until the damped information is positive definite.
            Eigen::MatrixXd info = -h;
            double ridge = 1e-6 * std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
            Eigen::LDLT<Eigen::MatrixXd> ldlt;
            do {
                ldlt.compute(info + ridge * Eigen::MatrixXd::Identity(info.rows(), info.cols()));
                ridge *= 10.0;
            } while (!ldlt.isPositive() || (ldlt.vectorD().array() <= 0.0).any());
            step = ldlt.solve(g);
        }

        bool accepted = false;
        for (int halving = 0; halving <= options.max_halvings; ++halving) {
            const Eigen::VectorXd candidate = theta + step;
            const double ll_new = model.loglik(candidate);
            if (ll_new > ll) {
                theta = candidate;
                ll = ll_new;
                accepted = true;
                break;
            }
            if (step.cwiseAbs().maxCoeff() < options.step_tolerance) break;
            step *= 0.5;
        }
        if (step.cwiseAbs().maxCoeff() < options.step_tolerance) {
            // Either a tiny accepted step or no representable improvement left.
            converged = true;
            ++iter;
            break;
        }
        if (!accepted) break;
        if (std::abs(theta[beta_index]) > options.separation_bound) {
            separated = true;
            ++iter;
            break;
        }
    }

    fit.beta = theta[beta_index];
    fit.intercepts.assign(theta.data(), theta.data() + beta_index);
    fit.loglik = ll;
    fit.iterations = iter;
    fit.converged = converged && !separated && std::abs(fit.beta) <= options.separation_bound;

    if (fit.converged) {
        auto factor = information_factor(model.hessian(theta));
        if (!factor) {
            fit.converged = false;
        } else {
            const Eigen::VectorXd unit = Eigen::VectorXd::Unit(theta.size(), beta_index);
            const double var = factor->solve(unit)[beta_index];
            if (var > 0.0 && std::isfinite(var)) {
                fit.se_beta = std::sqrt(var);
            } else {
                fit.converged = false;
            }
        }
    }
    for (std::size_t j = 1; j < fit.intercepts.size() && fit.converged; ++j) {
        if (!(fit.intercepts[j] > fit.intercepts[j - 1])) fit.converged = false;
    }
    return fit;
}

TestResult po_wald_test(const std::optional<PoFit>& fit) {
    if (!fit || !fit->converged) return TestResult::not_estimable(TestId::prop_odds_wald);
    const double z = fit->beta / fit->se_beta;
    return TestResult::ok(TestId::prop_odds_wald, 2.0 * normal_cdf(-std::abs(z)), z);
}

TestResult po_lrt_test(const std::optional<PoFit>& fit) {
    if (!fit || !fit->converged) return TestResult::not_estimable(TestId::prop_odds_lrt);
    // The Newton path starts at the null maximum and never lowers the
    // log-likelihood, so a negative gap is pure rounding.
    const double deviance = std::max(0.0, 2.0 * (fit->loglik - fit->null_loglik));
    return TestResult::ok(TestId::prop_odds_lrt, chi_square_sf(deviance, 1.0), deviance);
}

TestResult po_lrt_test(const ArmCounts& control, const ArmCounts& intervention) {
    return po_lrt_test(fit_proportional_odds(control, intervention));
}

}  // namespace transim
