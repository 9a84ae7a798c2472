// SPDX-License-Identifier: Apache-2.0
#include "aipo/lg_oracle.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "aipo/error.hpp"

namespace aipo::lg {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& cov, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw numeric_error("singular_covariance", what);
  return llt;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const Eigen::MatrixXd& L = llt.matrixL();
  return 2.0 * L.diagonal().array().log().sum();
}

void check_subset(const LinearGaussianModel& m, std::span<const int> S, std::span<const double> y) {
  if (S.size() != y.size()) throw numeric_error("shape_mismatch", "subset and values differ in length");
  for (int i : S) {
    if (i < 0 || i >= m.obs_dim()) {
      throw numeric_error("bad_index", "observation index " + std::to_string(i) + " out of range");
    }
  }
}

NumArray matrix_of(const Eigen::MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  }
  return NumArray::matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), std::move(v));
}

}  // namespace

double FullGaussian::entropy() const {
  const auto llt = factor(cov, "entropy of singular Gaussian");
  return 0.5 * dim() * (1.0 + kLog2Pi) + 0.5 * log_det(llt);
}

double FullGaussian::logpdf(const Eigen::VectorXd& x) const {
  const auto llt = factor(cov, "log-density of singular Gaussian");
  const Eigen::VectorXd r = x - mean;
  const Eigen::VectorXd w = llt.matrixL().solve(r);
  return -0.5 * (dim() * kLog2Pi + log_det(llt) + w.squaredNorm());
}

Eigen::VectorXd FullGaussian::sample(Rng& rng) const {
  const auto llt = factor(cov, "sampling singular Gaussian");
  Eigen::VectorXd e(dim());
  for (int i = 0; i < dim(); ++i) e(i) = rng.normal();
  return mean + llt.matrixL() * e;
}

FullGaussian FullGaussian::standard(int dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Identity(dim, dim)};
}

void LinearGaussianModel::validate() const {
  if (!(noise_std > 0.0)) throw config_error("bad_noise", "noise_std must be positive");
  if (b.size() != W.rows()) throw numeric_error("shape_mismatch", "bias length differs from W rows");
  if (!W.allFinite() || !b.allFinite()) throw numeric_error("non_finite", "model weights not finite");
}

LinearGaussianModel LinearGaussianModel::random(int d, int D, double noise_std, Rng& rng) {
  LinearGaussianModel m;
  m.W.resize(D, d);
  m.b.resize(D);
  for (int r = 0; r < D; ++r) {
    for (int c = 0; c < d; ++c) m.W(r, c) = rng.normal();
  }
  for (int r = 0; r < D; ++r) m.b(r) = 0.5 * rng.normal();
  m.noise_std = noise_std;
  return m;
}

FullGaussian posterior_given_subset(const LinearGaussianModel& m, std::span<const int> S,
                                    std::span<const double> y) {
  m.validate();
  check_subset(m, S, y);
  const int d = m.latent_dim();
  if (S.empty()) return FullGaussian::standard(d);
  const double inv_var = 1.0 / (m.noise_std * m.noise_std);
  Eigen::MatrixXd Ws(static_cast<Eigen::Index>(S.size()), d);
  Eigen::VectorXd r(static_cast<Eigen::Index>(S.size()));
  for (std::size_t k = 0; k < S.size(); ++k) {
    Ws.row(static_cast<Eigen::Index>(k)) = m.W.row(S[k]);
    r(static_cast<Eigen::Index>(k)) = y[k] - m.b(S[k]);
  }
  const Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(d, d) + inv_var * Ws.transpose() * Ws;
  const auto llt = factor(precision, "posterior precision");
  FullGaussian out;
  out.cov = llt.solve(Eigen::MatrixXd::Identity(d, d));
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  out.mean = out.cov * (inv_var * Ws.transpose() * r);
  return out;
}

double log_marginal(const LinearGaussianModel& m, std::span<const int> S, std::span<const double> y) {
  m.validate();
  check_subset(m, S, y);
  if (S.empty()) return 0.0;
  const auto n = static_cast<Eigen::Index>(S.size());
  Eigen::MatrixXd Ws(n, m.latent_dim());
  FullGaussian g{Eigen::VectorXd(n), Eigen::MatrixXd()};
  Eigen::VectorXd v(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Ws.row(k) = m.W.row(S[static_cast<std::size_t>(k)]);
    g.mean(k) = m.b(S[static_cast<std::size_t>(k)]);
    v(k) = y[static_cast<std::size_t>(k)];
  }
  g.cov = Ws * Ws.transpose() + m.noise_std * m.noise_std * Eigen::MatrixXd::Identity(n, n);
  return g.logpdf(v);
}

FullGaussian observation_marginal(const LinearGaussianModel& m) {
  m.validate();
  const int D = m.obs_dim();
  return {m.b, m.W * m.W.transpose() + m.noise_std * m.noise_std * Eigen::MatrixXd::Identity(D, D)};
}

FullGaussian joint(const LinearGaussianModel& m) {
  m.validate();
  const int d = m.latent_dim(), D = m.obs_dim();
  FullGaussian g{Eigen::VectorXd::Zero(d + D), Eigen::MatrixXd::Zero(d + D, d + D)};
  g.mean.tail(D) = m.b;
  g.cov.topLeftCorner(d, d).setIdentity();
  g.cov.topRightCorner(d, D) = m.W.transpose();
  g.cov.bottomLeftCorner(D, d) = m.W;
  g.cov.bottomRightCorner(D, D) = observation_marginal(m).cov;
  return g;
}

double kl_between_gaussians_full(const FullGaussian& a, const FullGaussian& b) {
  if (a.dim() != b.dim()) throw numeric_error("shape_mismatch", "KL between Gaussians of different dimension");
  const auto la = factor(a.cov, "KL: first covariance singular");
  const auto lb = factor(b.cov, "KL: second covariance singular");
  const Eigen::MatrixXd trace_term = lb.solve(a.cov);
  const Eigen::VectorXd diff = b.mean - a.mean;
  const double quad = diff.dot(lb.solve(diff));
  return 0.5 * (trace_term.trace() + quad - a.dim() + log_det(lb) - log_det(la));
}

FullGaussian LinearGaussianEncoder::at(const Eigen::VectorXd& x) const { return {A * x + a, cov}; }

LinearGaussianEncoder exact_posterior_encoder(const LinearGaussianModel& m) {
  m.validate();
  const int d = m.latent_dim();
  const double inv_var = 1.0 / (m.noise_std * m.noise_std);
  const Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(d, d) + inv_var * m.W.transpose() * m.W;
  LinearGaussianEncoder e;
  e.cov = factor(precision, "posterior precision").solve(Eigen::MatrixXd::Identity(d, d));
  e.cov = 0.5 * (e.cov + e.cov.transpose());
  e.A = inv_var * e.cov * m.W.transpose();
  e.a = -e.A * m.b;
  return e;
}

FullGaussian joint_with_encoder(const LinearGaussianEncoder& enc, const FullGaussian& data) {
  const int d = static_cast<int>(enc.a.size()), D = data.dim();
  FullGaussian g{Eigen::VectorXd(d + D), Eigen::MatrixXd(d + D, d + D)};
  g.mean.head(d) = enc.A * data.mean + enc.a;
  g.mean.tail(D) = data.mean;
  g.cov.topLeftCorner(d, d) = enc.A * data.cov * enc.A.transpose() + enc.cov;
  g.cov.topRightCorner(d, D) = enc.A * data.cov;
  g.cov.bottomLeftCorner(D, d) = data.cov * enc.A.transpose();
  g.cov.bottomRightCorner(D, D) = data.cov;
  return g;
}

Subset observed_subset(const MaskedImage& observed) {
  if (observed.channels() != 1) throw numeric_error("shape_mismatch", "observation must have one channel");
  Subset s;
  const auto& bits = observed.mask().bits;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (!bits[i]) continue;
    s.indices.push_back(static_cast<int>(i));
    s.values.push_back(observed.observed()[i]);
  }
  return s;
}

hvae::Model to_surrogate(const LinearGaussianModel& m, const LinearGaussianEncoder& enc,
                         hvae::HeadKind partial_heads, int hidden, Rng& rng) {
  m.validate();
  const int d = m.latent_dim(), D = m.obs_dim();
  if (enc.A.rows() != d || enc.A.cols() != D || enc.cov.rows() != d) {
    throw numeric_error("shape_mismatch", "encoder does not match the model");
  }
  hvae::HvaeConfig c;
  c.dims.assign(static_cast<std::size_t>(d), 1);
  c.hidden = hidden;
  c.state = d;
  c.feature = 1;
  c.height = 1;
  c.width = D;
  c.channels = 1;
  c.model_heads = hvae::HeadKind::linear;
  c.partial_heads = partial_heads;
  c.features = hvae::FeatureKind::identity;
  c.likelihood = hvae::Likelihood::gaussian;
  c.noise_std = m.noise_std;
  hvae::Model model = hvae::init_model(c, rng);
  auto& p = model.params;

  p["h0"] = NumArray::zeros({static_cast<std::size_t>(d)});
  p["dec.W"] = matrix_of(m.W);
  p["dec.b"] = NumArray::vector(std::vector<double>(m.b.data(), m.b.data() + D));

  for (int l = 0; l < d; ++l) {
    const std::string g = ".l" + std::to_string(l + 1);
    p["prior" + g + ".W"] = NumArray::zeros({2, static_cast<std::size_t>(d)});
    p["prior" + g + ".b"] = NumArray::zeros({2});

    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(d, d + 1);
    U(l, d) = 1.0;
    p["upd" + g + ".W"] = matrix_of(U);
    p["upd" + g + ".b"] = NumArray::zeros({static_cast<std::size_t>(d)});

    // z_l | z_<l, x  ~  N(m_l + beta^T (z_<l - m_<l), S_ll - S_l,<l beta)
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(l);
    double var = enc.cov(l, l);
    if (l > 0) {
      const Eigen::MatrixXd S11 = enc.cov.topLeftCorner(l, l);
      const Eigen::VectorXd s12 = enc.cov.block(0, l, l, 1);
      beta = factor(S11, "encoder covariance").solve(s12);
      var -= s12.dot(beta);
    }
    if (!(var > 0.0)) throw numeric_error("singular_covariance", "encoder covariance not positive definite");
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(2, d + D);
    E.block(0, 0, 1, l) = beta.transpose();
    E.block(0, d, 1, D) = enc.A.row(l) - beta.transpose() * enc.A.topRows(l);
    const double bias = enc.a(l) - (l > 0 ? beta.dot(enc.a.head(l)) : 0.0);
    p["enc" + g + ".W"] = matrix_of(E);
    p["enc" + g + ".b"] = NumArray::vector({bias, 0.5 * std::log(var)});
  }
  return model;
}

ImageGrid as_image(const Eigen::VectorXd& x) {
  ImageGrid img = ImageGrid::blank(1, static_cast<int>(x.size()), 1);
  for (Eigen::Index i = 0; i < x.size(); ++i) img.pixels[static_cast<std::size_t>(i)] = x(i);
  return img;
}

Eigen::VectorXd to_vector(std::span<const double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

std::vector<std::vector<double>> to_groups(const Eigen::VectorXd& z) {
  std::vector<std::vector<double>> g;
  for (Eigen::Index i = 0; i < z.size(); ++i) g.push_back({z(i)});
  return g;
}

Eigen::VectorXd from_groups(const std::vector<std::vector<double>>& z) {
  std::vector<double> flat;
  for (const auto& g : z) flat.insert(flat.end(), g.begin(), g.end());
  return to_vector(flat);
}

}  // namespace aipo::lg
