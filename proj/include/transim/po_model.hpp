#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "transim/stat_tests.hpp"

namespace transim {

/// Proportional-odds (cumulative logit) model for a two-arm table:
///
///     logit P(Y <= j | x) = alpha_j - beta * x,   x = 1 for intervention.
///
/// beta > 0 means the intervention shifts mass toward higher ranks. For a
/// DOOR endpoint (rank 1 best) a beneficial intervention has beta < 0.
struct PoFit {
    double beta = 0.0;
    double se_beta = 0.0;
    std::vector<double> intercepts;  // alpha_1 < ... < alpha_{K'-1}
    double loglik = 0.0;
    double null_loglik = 0.0;  // beta = 0 fit, closed form
    int iterations = 0;
    bool converged = false;
};

struct PoFitOptions {
    double score_tolerance = 1e-8;
    double step_tolerance = 1e-10;
    int max_iterations = 100;
    int max_halvings = 10;
    double separation_bound = 20.0;
};

/// Multinomial log-likelihood of the collapsed 2 x K' table, its score and
/// observed Hessian in theta = (alpha_1..alpha_{K'-1}, beta). Exposed for
/// gradient checks and external optimizers.
class PoLikelihood {
public:
    /// Arms must already have zero-total categories removed (K' >= 2).
    PoLikelihood(ArmCounts control, ArmCounts intervention);

    std::size_t parameters() const noexcept { return control_.categories(); }

    double loglik(const Eigen::VectorXd& theta) const;
    Eigen::VectorXd score(const Eigen::VectorXd& theta) const;
    Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const;

    /// Closed-form maximum under beta = 0 (pooled category proportions).
    double null_loglik() const;
    /// Pooled empirical cumulative logits followed by beta = 0.
    Eigen::VectorXd initial_point() const;

private:
    ArmCounts control_;
    ArmCounts intervention_;
};

/// Damped Newton maximum likelihood. Returns nullopt when fewer than two
/// categories are non-empty. Separation or iteration exhaustion yields
/// converged = false rather than an error.
std::optional<PoFit> fit_proportional_odds(const ArmCounts& control, const ArmCounts& intervention,
                                           const PoFitOptions& options = {});

/// Wald test of beta = 0: z = beta / se, two-sided normal p-value.
TestResult po_wald_test(const std::optional<PoFit>& fit);

/// Likelihood-ratio test of beta = 0 on 1 df.
TestResult po_lrt_test(const std::optional<PoFit>& fit);
TestResult po_lrt_test(const ArmCounts& control, const ArmCounts& intervention);

}  // namespace transim
