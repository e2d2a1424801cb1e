#pragma once

// Scalar reference implementations written directly from the formulas with
// plain loops over std::vector. They share no code with the library.

#include <cstdint>
#include <vector>

namespace mdcl::oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, rows are samples / embeddings

double dot(const Vec& a, const Vec& b);

/// exp(a_i.p_i/tau) / sum_j exp(a_i.p_j/tau)
double matching_probability(const Mat& anchors, const Mat& positives, int i, double tau);
double patchnce_term(const Mat& anchors, const Mat& positives, int i, double tau);
/// -log( exp(a_i.p_i/tau) / (sum_j exp(a_i.p_j/tau) + sum_{j != i} exp(a_i.a_j/tau)) )
double mix_domain_term(const Mat& anchors, const Mat& positives, int i, double tau);
double patchnce_loss(const Mat& anchors, const Mat& positives, double tau, const Vec& weights = {});
double mix_domain_loss(const Mat& anchors, const Mat& positives, double tau, const Vec& weights = {});

/// Rank-based weights: rank_i = 1 + #{s_j < s_i} + (#{s_j == s_i} - 1) / 2.
Vec adaptive_weights(const Mat& anchors, const Mat& gt_positives, double progress);

/// Single-channel image as rows of pixels.
using Plane = std::vector<std::vector<double>>;

/// 5x5 binomial blur with clamped (replicated) borders, then keep even rows / cols.
Plane pyramid_down(const Plane& image);
/// Sum over levels and channels of w_l * mean |a - b| (mean over all pixels and channels).
double gp_loss(const std::vector<Plane>& a, const std::vector<Plane>& b, const Vec& level_weights);

/// Least-squares GAN terms from flat logit lists.
double lsgan_d(const Vec& real, const Vec& fake);
double lsgan_g(const Vec& fake);

Vec mean(const Mat& rows);
/// Sample covariance with 1/(N-1).
Mat covariance(const Mat& rows);
/// Principal square root by Denman-Beavers iteration (requires positive real spectrum).
Mat sqrtm(const Mat& a);
Mat matmul(const Mat& a, const Mat& b);
double fid(const Mat& a, const Mat& b);

/// O(n^2) unbiased MMD^2 with k(x, y) = (x.y / F + 1)^3.
double mmd2_unbiased(const Mat& x, const Mat& y);

/// Fraction of elements whose jointly min/max normalized values differ by more than T.
double phv_pair(const Vec& a, const Vec& b, double threshold);

}  // namespace mdcl::oracle
