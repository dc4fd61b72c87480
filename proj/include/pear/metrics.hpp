#pragma once

#include <Eigen/Core>
#include <vector>

#include "pear/policy.hpp"
#include "pear/trajectory.hpp"

namespace pear {

struct DriftReport {
    double forward_kl = 0.0;
    double sparsity = 0.0;
    double nss = 0.0;
    double mean_principal_angle = 0.0;  // radians; NaN when no gradients given
};

// KL(base || trained) per visited context row, averaged over positions then
// macro-averaged over calibration sequences.
double forward_kl(const TabularPolicy& base, const TabularPolicy& trained,
                  const TrajectoryBatch& calibration);

// Fraction of entries with |trained - base| < epsilon.
double update_sparsity(const Eigen::MatrixXd& w_base, const Eigen::MatrixXd& w_trained,
                       double epsilon);

// ||sigma(w_plus) - sigma(w_0)|| / ||sigma(w_0)|| on descending spectra.
double nss(const Eigen::MatrixXd& w_0, const Eigen::MatrixXd& w_plus);

struct RotationReport {
    std::vector<double> cosines;  // singular values of U_off_k^T U_on_k, clamped to [0,1]
    double mean_angle = 0.0;
};

// Principal angles between the top-k left-singular subspaces of two
// gradient matrices.
RotationReport gradient_rotation(const Eigen::MatrixXd& grad_offline,
                                 const Eigen::MatrixXd& grad_online, int k);

constexpr double kDefaultSparsityEpsilon = 1e-5;

}  // namespace pear
