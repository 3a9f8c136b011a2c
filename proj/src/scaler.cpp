#include "lpvmpc/scaler.hpp"

#include <stdexcept>

namespace lpvmpc {

namespace {

Scaler fit_impl(const Eigen::MatrixXd& data, bool allow_constant) {
    if (data.rows() < 1) throw std::invalid_argument("Scaler: no rows to fit");
    Eigen::VectorXd lo = data.colwise().minCoeff();
    Eigen::VectorXd hi = data.colwise().maxCoeff();
    Eigen::VectorXd span = hi - lo;
    for (Eigen::Index c = 0; c < span.size(); ++c) {
        if (span[c] <= 0.0) {
            if (!allow_constant)
                throw std::invalid_argument("Scaler: channel " + std::to_string(c) +
                                            " has zero range");
            span[c] = 1.0;
        }
    }
    return Scaler::from_offsets_spans(std::move(lo), std::move(span));
}

}  // namespace

Scaler Scaler::fit(const Eigen::MatrixXd& data) { return fit_impl(data, false); }

Scaler Scaler::fit_allow_constant(const Eigen::MatrixXd& data) { return fit_impl(data, true); }

Scaler Scaler::from_offsets_spans(Eigen::VectorXd offset, Eigen::VectorXd span) {
    if (offset.size() != span.size())
        throw std::invalid_argument("Scaler: offset/span size mismatch");
    for (Eigen::Index c = 0; c < span.size(); ++c)
        if (!(span[c] > 0.0)) throw std::invalid_argument("Scaler: span must be positive");
    Scaler s;
    s.offset_ = std::move(offset);
    s.span_ = std::move(span);
    return s;
}

Eigen::MatrixXd Scaler::apply(const Eigen::MatrixXd& data) const {
    if (data.cols() != channels()) throw std::invalid_argument("Scaler: channel count mismatch");
    return (data.rowwise() - offset_.transpose()).array().rowwise() /
           span_.transpose().array();
}

Eigen::MatrixXd Scaler::invert(const Eigen::MatrixXd& scaled) const {
    if (scaled.cols() != channels()) throw std::invalid_argument("Scaler: channel count mismatch");
    return (scaled.array().rowwise() * span_.transpose().array()).matrix().rowwise() +
           offset_.transpose();
}

Eigen::VectorXd Scaler::apply_row(const Eigen::VectorXd& row) const {
    if (row.size() != channels()) throw std::invalid_argument("Scaler: channel count mismatch");
    return (row - offset_).cwiseQuotient(span_);
}

Eigen::VectorXd Scaler::invert_row(const Eigen::VectorXd& row) const {
    if (row.size() != channels()) throw std::invalid_argument("Scaler: channel count mismatch");
    return row.cwiseProduct(span_) + offset_;
}

double Scaler::apply_one(Eigen::Index channel, double v) const {
    return (v - offset_[channel]) / span_[channel];
}

double Scaler::invert_one(Eigen::Index channel, double v) const {
    return v * span_[channel] + offset_[channel];
}

}  // namespace lpvmpc
