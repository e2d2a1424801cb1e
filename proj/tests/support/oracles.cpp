#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mdcl::oracle {

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double matching_probability(const Mat& anchors, const Mat& positives, int i, double tau) {
  double denom = 0.0;
  for (const auto& p : positives) denom += std::exp(dot(anchors[i], p) / tau);
  return std::exp(dot(anchors[i], positives[i]) / tau) / denom;
}

double patchnce_term(const Mat& anchors, const Mat& positives, int i, double tau) {
  return -std::log(matching_probability(anchors, positives, i, tau));
}

double mix_domain_term(const Mat& anchors, const Mat& positives, int i, double tau) {
  double denom = 0.0;
  for (const auto& p : positives) denom += std::exp(dot(anchors[i], p) / tau);
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    if (static_cast<int>(j) != i) denom += std::exp(dot(anchors[i], anchors[j]) / tau);
  }
  return -std::log(std::exp(dot(anchors[i], positives[i]) / tau) / denom);
}

double patchnce_loss(const Mat& anchors, const Mat& positives, double tau, const Vec& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    total += (weights.empty() ? 1.0 : weights[i]) * patchnce_term(anchors, positives, static_cast<int>(i), tau);
  }
  return total;
}

double mix_domain_loss(const Mat& anchors, const Mat& positives, double tau, const Vec& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    total += (weights.empty() ? 1.0 : weights[i]) * mix_domain_term(anchors, positives, static_cast<int>(i), tau);
  }
  return total;
}

Vec adaptive_weights(const Mat& anchors, const Mat& gt_positives, double progress) {
  const std::size_t m = anchors.size();
  Vec s(m);
  for (std::size_t i = 0; i < m; ++i) s[i] = dot(anchors[i], gt_positives[i]);
  Vec omega(m);
  for (std::size_t i = 0; i < m; ++i) {
    double below = 0.0;
    double equal = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (s[j] < s[i]) below += 1.0;
      if (s[j] == s[i]) equal += 1.0;
    }
    const double rank = 1.0 + below + (equal - 1.0) / 2.0;
    const double r = m == 1 ? 1.0 : (rank - 1.0) / static_cast<double>(m - 1);
    omega[i] = (1.0 - progress) + progress * r;
  }
  return omega;
}

Plane pyramid_down(const Plane& image) {
  static constexpr double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  const int h = static_cast<int>(image.size());
  const int w = static_cast<int>(image[0].size());
  Plane out(h / 2, std::vector<double>(w / 2, 0.0));
  for (int y = 0; y < h; y += 2) {
    for (int x = 0; x < w; x += 2) {
      double acc = 0.0;
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          const int xx = std::clamp(x + dx, 0, w - 1);
          acc += k[dy + 2] * k[dx + 2] * image[yy][xx];
        }
      }
      out[y / 2][x / 2] = acc;
    }
  }
  return out;
}

double gp_loss(const std::vector<Plane>& a, const std::vector<Plane>& b, const Vec& level_weights) {
  std::vector<Plane> pa = a;
  std::vector<Plane> pb = b;
  double total = 0.0;
  for (std::size_t level = 0; level < level_weights.size(); ++level) {
    if (level > 0) {
      for (auto& p : pa) p = pyramid_down(p);
      for (auto& p : pb) p = pyramid_down(p);
    }
    double sum = 0.0;
    double count = 0.0;
    for (std::size_t c = 0; c < pa.size(); ++c) {
      for (std::size_t y = 0; y < pa[c].size(); ++y) {
        for (std::size_t x = 0; x < pa[c][y].size(); ++x) {
          sum += std::abs(pa[c][y][x] - pb[c][y][x]);
          count += 1.0;
        }
      }
    }
    total += level_weights[level] * sum / count;
  }
  return total;
}

double lsgan_d(const Vec& real, const Vec& fake) {
  double r = 0.0;
  for (double v : real) r += (v - 1.0) * (v - 1.0);
  double f = 0.0;
  for (double v : fake) f += v * v;
  return 0.5 * r / static_cast<double>(real.size()) + 0.5 * f / static_cast<double>(fake.size());
}

double lsgan_g(const Vec& fake) {
  double f = 0.0;
  for (double v : fake) f += (v - 1.0) * (v - 1.0);
  return f / static_cast<double>(fake.size());
}

Vec mean(const Mat& rows) {
  Vec mu(rows[0].size(), 0.0);
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) mu[k] += r[k];
  }
  for (double& v : mu) v /= static_cast<double>(rows.size());
  return mu;
}

Mat covariance(const Mat& rows) {
  const Vec mu = mean(rows);
  const std::size_t f = mu.size();
  Mat cov(f, Vec(f, 0.0));
  for (const auto& r : rows) {
    for (std::size_t a = 0; a < f; ++a) {
      for (std::size_t b = 0; b < f; ++b) cov[a][b] += (r[a] - mu[a]) * (r[b] - mu[b]);
    }
  }
  for (auto& row : cov) {
    for (double& v : row) v /= static_cast<double>(rows.size() - 1);
  }
  return cov;
}

Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), Vec(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
    }
  }
  return c;
}

namespace {

Mat inverse(Mat a) {
  const std::size_t n = a.size();
  Mat inv(n, Vec(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (std::abs(a[pivot][col]) < 1e-300) throw std::runtime_error("oracle inverse: singular matrix");
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double d = a[col][col];
    for (std::size_t j = 0; j < n; ++j) {
      a[col][j] /= d;
      inv[col][j] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double factor = a[r][col];
      for (std::size_t j = 0; j < n; ++j) {
        a[r][j] -= factor * a[col][j];
        inv[r][j] -= factor * inv[col][j];
      }
    }
  }
  return inv;
}

}  // namespace

Mat sqrtm(const Mat& a) {
  const std::size_t n = a.size();
  Mat y = a;
  Mat z(n, Vec(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) z[i][i] = 1.0;
  for (int iter = 0; iter < 100; ++iter) {
    const Mat yi = inverse(y);
    const Mat zi = inverse(z);
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double ny = 0.5 * (y[i][j] + zi[i][j]);
        change = std::max(change, std::abs(ny - y[i][j]));
        y[i][j] = ny;
        z[i][j] = 0.5 * (z[i][j] + yi[i][j]);
      }
    }
    if (change < 1e-15) break;
  }
  return y;
}

double fid(const Mat& a, const Mat& b) {
  const Vec ma = mean(a);
  const Vec mb = mean(b);
  const Mat ca = covariance(a);
  const Mat cb = covariance(b);
  double d2 = 0.0;
  for (std::size_t k = 0; k < ma.size(); ++k) d2 += (ma[k] - mb[k]) * (ma[k] - mb[k]);
  const Mat root = sqrtm(matmul(ca, cb));
  double tr = 0.0;
  for (std::size_t k = 0; k < ma.size(); ++k) tr += ca[k][k] + cb[k][k] - 2.0 * root[k][k];
  return d2 + tr;
}

double mmd2_unbiased(const Mat& x, const Mat& y) {
  const double f = static_cast<double>(x[0].size());
  auto kernel = [f](const Vec& p, const Vec& q) { return std::pow(dot(p, q) / f + 1.0, 3); };
  const double m = static_cast<double>(x.size());
  const double n = static_cast<double>(y.size());
  double kxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (i != j) kxx += kernel(x[i], x[j]);
    }
  }
  double kyy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (i != j) kyy += kernel(y[i], y[j]);
    }
  }
  double kxy = 0.0;
  for (const auto& p : x) {
    for (const auto& q : y) kxy += kernel(p, q);
  }
  return kxx / (m * (m - 1.0)) + kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n);
}

double phv_pair(const Vec& a, const Vec& b, double threshold) {
  double lo = a[0];
  double hi = a[0];
  for (double v : a) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : b) lo = std::min(lo, v), hi = std::max(hi, v);
  if (hi - lo <= 0.0) return 0.0;
  double over = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (std::abs((a[k] - lo) / (hi - lo) - (b[k] - lo) / (hi - lo)) > threshold) over += 1.0;
  }
  return over / static_cast<double>(a.size());
}

}  // namespace mdcl::oracle
