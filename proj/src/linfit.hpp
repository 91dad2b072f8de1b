#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace edgescale {

struct OlsResult {
    Eigen::VectorXd beta;
    double sigma = 0.0;  // residual std, dof-corrected
    double r2 = 0.0;
};

// Ordinary least squares with rank checking. `names` labels the columns of X
// (including the intercept) for the rank-deficiency diagnostic.
inline OlsResult ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const std::vector<std::string>& names) {
    const auto n = X.rows();
    const auto p = X.cols();
    if (n < p + 1)
        throw std::domain_error("need at least " + std::to_string(p + 1) +
                                " samples, got " + std::to_string(n));
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-8);
    if (qr.rank() < p) {
        // point at constant predictors first; fall back to the columns the
        // pivoting ranked last
        std::string degenerate;
        for (Eigen::Index j = 1; j < p; ++j) {
            double spread = X.col(j).maxCoeff() - X.col(j).minCoeff();
            if (spread < 1e-12) {
                if (!degenerate.empty()) degenerate += ", ";
                degenerate += names[static_cast<std::size_t>(j)];
            }
        }
        if (degenerate.empty()) {
            const auto& perm = qr.colsPermutation().indices();
            for (Eigen::Index k = qr.rank(); k < p; ++k) {
                if (!degenerate.empty()) degenerate += ", ";
                degenerate += names[static_cast<std::size_t>(perm[k])];
            }
        }
        throw std::runtime_error("rank-deficient design matrix; degenerate predictor: " +
                                 degenerate);
    }
    OlsResult res;
    res.beta = qr.solve(y);
    Eigen::VectorXd resid = y - X * res.beta;
    double ssr = resid.squaredNorm();
    double dof = static_cast<double>(n - p);
    res.sigma = dof > 0 ? std::sqrt(ssr / dof) : 0.0;
    double mean = y.mean();
    double sst = (y.array() - mean).matrix().squaredNorm();
    res.r2 = sst > 0 ? 1.0 - ssr / sst : 1.0;
    return res;
}

}  // namespace edgescale
