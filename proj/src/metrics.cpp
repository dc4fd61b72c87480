#include "pear/metrics.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "pear/errors.hpp"

namespace pear {

double forward_kl(const TabularPolicy& base, const TabularPolicy& trained,
                  const TrajectoryBatch& calibration) {
    if (base.vocab_size() != trained.vocab_size() || base.rows() != trained.rows())
        throw ValidationError("forward_kl: policy shapes differ");
    if (calibration.items.empty()) throw ValidationError("forward_kl: empty calibration set");
    double macro = 0.0;
    for (const Trajectory& traj : calibration.items) {
        std::span<const int> response(traj.response);
        double seq_kl = 0.0;
        for (size_t t = 0; t < traj.response.size(); ++t) {
            const int row = base.context_row(traj.prompt, response.subspan(0, t));
            Eigen::VectorXd lp_base = base.row_log_probs(row);
            Eigen::VectorXd lp_trained = trained.row_log_probs(row);
            double kl = 0.0;
            for (int i = 0; i < base.vocab_size(); ++i)
                kl += std::exp(lp_base(i)) * (lp_base(i) - lp_trained(i));
            seq_kl += kl;
        }
        macro += seq_kl / static_cast<double>(traj.response.size());
    }
    return macro / static_cast<double>(calibration.items.size());
}

double update_sparsity(const Eigen::MatrixXd& w_base, const Eigen::MatrixXd& w_trained,
                       double epsilon) {
    if (w_base.rows() != w_trained.rows() || w_base.cols() != w_trained.cols())
        throw ValidationError("update_sparsity: shape mismatch");
    if (!(epsilon > 0.0)) throw ValidationError("update_sparsity: epsilon must be > 0");
    const Eigen::ArrayXXd diff = (w_trained - w_base).array().abs();
    return (diff < epsilon).cast<double>().mean();
}

double nss(const Eigen::MatrixXd& w_0, const Eigen::MatrixXd& w_plus) {
    if (w_0.rows() != w_plus.rows() || w_0.cols() != w_plus.cols())
        throw ValidationError("nss: shape mismatch");
    if (w_0.isZero(0.0)) throw ValidationError("nss: base matrix is all-zero");
    Eigen::VectorXd s0 = Eigen::BDCSVD<Eigen::MatrixXd>(w_0).singularValues();
    Eigen::VectorXd s1 = Eigen::BDCSVD<Eigen::MatrixXd>(w_plus).singularValues();
    // Eigen already returns singular values in descending order.
    return (s1 - s0).norm() / s0.norm();
}

RotationReport gradient_rotation(const Eigen::MatrixXd& grad_offline,
                                 const Eigen::MatrixXd& grad_online, int k) {
    if (grad_offline.rows() != grad_online.rows() || grad_offline.cols() != grad_online.cols())
        throw ValidationError("gradient_rotation: shape mismatch");
    const int max_k = static_cast<int>(std::min(grad_offline.rows(), grad_offline.cols()));
    if (k < 1 || k > max_k)
        throw ValidationError("gradient_rotation: k must be in [1, min(rows, cols)]");
    Eigen::BDCSVD<Eigen::MatrixXd> svd_off(grad_offline, Eigen::ComputeThinU);
    Eigen::BDCSVD<Eigen::MatrixXd> svd_on(grad_online, Eigen::ComputeThinU);
    const Eigen::MatrixXd cross =
        svd_off.matrixU().leftCols(k).transpose() * svd_on.matrixU().leftCols(k);
    Eigen::VectorXd cosines = Eigen::BDCSVD<Eigen::MatrixXd>(cross).singularValues();
    RotationReport report;
    double angle_sum = 0.0;
    for (int i = 0; i < cosines.size(); ++i) {
        const double c = std::clamp(cosines(i), 0.0, 1.0);
        report.cosines.push_back(c);
        angle_sum += std::acos(c);
    }
    report.mean_angle = angle_sum / static_cast<double>(report.cosines.size());
    return report;
}

}  // namespace pear
