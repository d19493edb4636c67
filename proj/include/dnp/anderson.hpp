#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include <Eigen/Dense>

namespace dnp {

/// Damped Anderson mixing for x = T(x) in the form of Walker and Ni:
///   x+ = x + w r - (dX + w dR) gamma,  gamma = argmin |r - dR gamma|,
/// with r = T(x) - x and dX, dR the last `depth` differences of iterates and
/// residuals. depth = 0 gives damped Picard iteration.
class AndersonMixer {
public:
    explicit AndersonMixer(std::size_t depth) : depth_(depth) {}

    void clear()
    {
        dx_.clear();
        dr_.clear();
        have_prev_ = false;
    }

    std::size_t history() const noexcept { return dx_.size(); }

    std::vector<double> next(const std::vector<double>& x, const std::vector<double>& r, double omega)
    {
        const auto n = static_cast<Eigen::Index>(x.size());
        const Eigen::Map<const Eigen::VectorXd> xv(x.data(), n), rv(r.data(), n);
        if (depth_ > 0 && have_prev_) {
            dx_.push_back(xv - prev_x_);
            dr_.push_back(rv - prev_r_);
            if (dx_.size() > depth_) {
                dx_.pop_front();
                dr_.pop_front();
            }
        }
        prev_x_ = xv;
        prev_r_ = rv;
        have_prev_ = true;

        Eigen::VectorXd out = xv + omega * rv;
        if (!dx_.empty()) {
            const auto k = static_cast<Eigen::Index>(dx_.size());
            Eigen::MatrixXd R(n, k), X(n, k);
            for (Eigen::Index j = 0; j < k; ++j) {
                R.col(j) = dr_[static_cast<std::size_t>(j)];
                X.col(j) = dx_[static_cast<std::size_t>(j)];
            }
            const Eigen::VectorXd gamma = R.completeOrthogonalDecomposition().solve(rv);
            if (gamma.allFinite())
                out -= (X + omega * R) * gamma;
        }
        return {out.data(), out.data() + n};
    }

private:
    std::size_t depth_;
    std::deque<Eigen::VectorXd> dx_, dr_;
    Eigen::VectorXd prev_x_, prev_r_;
    bool have_prev_ = false;
};

} // namespace dnp
