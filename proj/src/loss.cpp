#include "specshrink/loss.hpp"

#include <cmath>

namespace specshrink {

double ell_apply(Ell e, double x) {
  switch (e) {
    case Ell::X:
      return x;
    case Ell::XInv:
      return 1.0 / x;
    case Ell::Sqrt:
      return std::sqrt(x);
    case Ell::Log:
      return std::log(x);
    case Ell::X2:
      return x * x;
    case Ell::XInv2:
      return 1.0 / (x * x);
  }
  return 0.0;
}

const char* ell_name(Ell e) {
  switch (e) {
    case Ell::X:
      return "x";
    case Ell::XInv:
      return "xinv";
    case Ell::Sqrt:
      return "sqrt";
    case Ell::Log:
      return "log";
    case Ell::X2:
      return "x2";
    case Ell::XInv2:
      return "xinv2";
  }
  return "?";
}

Ell ell_from_name(const std::string& name) {
  if (name == "x") return Ell::X;
  if (name == "xinv") return Ell::XInv;
  if (name == "sqrt") return Ell::Sqrt;
  if (name == "log") return Ell::Log;
  if (name == "x2") return Ell::X2;
  if (name == "xinv2") return Ell::XInv2;
  throw ConfigError("unknown ell: " + name);
}

const char* loss_name(Loss l) {
  switch (l) {
    case Loss::Frobenius:
      return "frobenius";
    case Loss::InverseStein:
      return "inverse-stein";
    case Loss::Disutility:
      return "disutility";
    case Loss::MinimumVariance:
      return "minimum-variance";
    case Loss::Stein:
      return "stein";
    case Loss::WeightedFrobenius:
      return "weighted-frobenius";
    case Loss::InverseFrobenius:
      return "inverse-frobenius";
    case Loss::SymmetrizedStein:
      return "symmetrized-stein";
    case Loss::LogEuclidean:
      return "log-euclidean";
    case Loss::Frechet:
      return "frechet";
    case Loss::Quadratic:
      return "quadratic";
    case Loss::InverseQuadratic:
      return "inverse-quadratic";
  }
  return "?";
}

Loss loss_from_name(const std::string& name) {
  for (Loss l : all_losses())
    if (name == loss_name(l)) return l;
  throw ConfigError("unknown loss: " + name);
}

std::vector<Loss> all_losses() {
  return {Loss::Frobenius,        Loss::InverseStein,
          Loss::Disutility,       Loss::MinimumVariance,
          Loss::Stein,            Loss::WeightedFrobenius,
          Loss::InverseFrobenius, Loss::SymmetrizedStein,
          Loss::LogEuclidean,     Loss::Frechet,
          Loss::Quadratic,        Loss::InverseQuadratic};
}

std::vector<Ell> ell_set(Loss l) {
  switch (l) {
    case Loss::Frobenius:
    case Loss::InverseStein:
    case Loss::Disutility:
    case Loss::MinimumVariance:
      return {Ell::X};
    case Loss::Stein:
    case Loss::WeightedFrobenius:
    case Loss::InverseFrobenius:
      return {Ell::XInv};
    case Loss::SymmetrizedStein:
      return {Ell::X, Ell::XInv};
    case Loss::LogEuclidean:
      return {Ell::Log};
    case Loss::Frechet:
      return {Ell::Sqrt};
    case Loss::Quadratic:
      return {Ell::XInv, Ell::XInv2};
    case Loss::InverseQuadratic:
      return {Ell::X, Ell::X2};
  }
  return {};
}

namespace {

double get_moment(const std::map<Ell, double>& m, Ell e) {
  const auto it = m.find(e);
  if (it == m.end())
    throw ConfigError(std::string("missing moment for ell = ") + ell_name(e));
  return it->second;
}

double require_positive(double v, const char* what) {
  if (!(v > 0.0))
    throw NumericalError(std::string("nonpositive moment in ") + what);
  return v;
}

}  // namespace

double shrinker_from_moments(Loss l, const std::map<Ell, double>& m) {
  switch (l) {
    case Loss::Frobenius:
    case Loss::InverseStein:
    case Loss::Disutility:
    case Loss::MinimumVariance:
      return get_moment(m, Ell::X);
    case Loss::Stein:
    case Loss::WeightedFrobenius:
    case Loss::InverseFrobenius:
      return 1.0 / require_positive(get_moment(m, Ell::XInv), "1/(u'S^-1 u)");
    case Loss::SymmetrizedStein:
      return std::sqrt(require_positive(get_moment(m, Ell::X), "sym-stein") /
                       require_positive(get_moment(m, Ell::XInv), "sym-stein"));
    case Loss::LogEuclidean:
      return std::exp(get_moment(m, Ell::Log));
    case Loss::Frechet: {
      const double v = get_moment(m, Ell::Sqrt);
      return v * v;
    }
    case Loss::Quadratic:
      return get_moment(m, Ell::XInv) /
             require_positive(get_moment(m, Ell::XInv2), "quadratic");
    case Loss::InverseQuadratic:
      return get_moment(m, Ell::X2) /
             require_positive(get_moment(m, Ell::X), "inverse-quadratic");
  }
  return 0.0;
}

Eigen::MatrixXd matrix_function(Ell e, const Eigen::MatrixXd& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  if (es.info() != Eigen::Success)
    throw NumericalError("matrix_function: eigensolver failure");
  Eigen::VectorXd vals = es.eigenvalues();
  const bool needs_positive =
      (e == Ell::Sqrt || e == Ell::Log || e == Ell::XInv || e == Ell::XInv2);
  Eigen::VectorXd mapped(vals.size());
  for (int i = 0; i < vals.size(); ++i) {
    if (needs_positive && vals[i] <= 1e-12)
      throw NumericalError("matrix_function needs eigenvalues > 1e-12");
    mapped[i] = ell_apply(e, vals[i]);
  }
  return es.eigenvectors() * mapped.asDiagonal() *
         es.eigenvectors().transpose();
}

Eigen::VectorXd optimal_shrinkers(Loss l, const Eigen::MatrixXd& sigma,
                                  const Eigen::MatrixXd& u, int n) {
  const int p = static_cast<int>(sigma.rows());
  const int k = std::min(p, n);
  std::vector<Ell> ells = ell_set(l);
  std::map<Ell, Eigen::MatrixXd> funcs;
  for (Ell e : ells) funcs[e] = matrix_function(e, sigma);
  Eigen::VectorXd phi(p);
  for (int i = 0; i < k; ++i) {
    std::map<Ell, double> m;
    for (Ell e : ells) m[e] = u.col(i).dot(funcs[e] * u.col(i));
    phi[i] = shrinker_from_moments(l, m);
  }
  if (k < p) {
    std::map<Ell, double> m;
    const auto u0 = u.rightCols(p - k);
    for (Ell e : ells)
      m[e] = (u0.transpose() * funcs[e] * u0).trace() / (p - k);
    const double phi0 = shrinker_from_moments(l, m);
    for (int i = k; i < p; ++i) phi[i] = phi0;
  }
  return phi;
}

double loss_value(Loss l, const Eigen::MatrixXd& sigma,
                  const Eigen::MatrixXd& sh) {
  const int p = static_cast<int>(sigma.rows());
  const double dp = static_cast<double>(p);
  switch (l) {
    case Loss::Frobenius:
      return (sigma - sh).norm() / std::sqrt(dp);
    case Loss::InverseQuadratic: {
      Eigen::MatrixXd shi = matrix_function(Ell::XInv, sh);
      return (shi * sigma - Eigen::MatrixXd::Identity(p, p)).norm() /
             std::sqrt(dp);
    }
    case Loss::Disutility: {
      Eigen::MatrixXd shi = matrix_function(Ell::XInv, sh);
      Eigen::MatrixXd si = matrix_function(Ell::XInv, sigma);
      Eigen::MatrixXd d = shi - si;
      return (d * d * sigma).trace() / si.trace();
    }
    case Loss::Quadratic: {
      Eigen::MatrixXd si = matrix_function(Ell::XInv, sigma);
      return (si * sh - Eigen::MatrixXd::Identity(p, p)).norm() /
             std::sqrt(dp);
    }
    case Loss::InverseStein: {
      Eigen::MatrixXd m = matrix_function(Ell::XInv, sh) * sigma;
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
      double logdet = 0.0;
      for (int i = 0; i < p; ++i)
        logdet += std::log(std::abs(lu.matrixLU()(i, i)));
      return (m.trace() - dp - logdet) / dp;
    }
    case Loss::Frechet:
      return (matrix_function(Ell::Sqrt, sh) - matrix_function(Ell::Sqrt, sigma))
                 .norm() /
             std::sqrt(dp);
    case Loss::MinimumVariance: {
      Eigen::MatrixXd shi = matrix_function(Ell::XInv, sh);
      Eigen::MatrixXd si = matrix_function(Ell::XInv, sigma);
      const double t = shi.trace();
      return dp * (shi * sigma * shi).trace() / (t * t) - dp / si.trace();
    }
    case Loss::LogEuclidean: {
      Eigen::MatrixXd d =
          matrix_function(Ell::Log, sh) - matrix_function(Ell::Log, sigma);
      return d.norm() / std::sqrt(dp);
    }
    case Loss::Stein: {
      Eigen::MatrixXd m = sh * matrix_function(Ell::XInv, sigma);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
      double logdet = 0.0;
      for (int i = 0; i < p; ++i)
        logdet += std::log(std::abs(lu.matrixLU()(i, i)));
      return (m.trace() - dp - logdet) / dp;
    }
    case Loss::SymmetrizedStein: {
      Eigen::MatrixXd si = matrix_function(Ell::XInv, sigma);
      Eigen::MatrixXd shi = matrix_function(Ell::XInv, sh);
      return ((sh * si).trace() + (shi * sigma).trace() - 2.0 * dp) / dp;
    }
    case Loss::WeightedFrobenius: {
      Eigen::MatrixXd d = sh - sigma;
      return (d * d * matrix_function(Ell::XInv, sigma)).trace() /
             sigma.trace();
    }
    case Loss::InverseFrobenius:
      return (matrix_function(Ell::XInv, sigma) - matrix_function(Ell::XInv, sh))
                 .norm() /
             std::sqrt(dp);
  }
  return 0.0;
}

RiskIdentity exact_risk_decomposition(Loss l, const Eigen::MatrixXd& sigma,
                                      const Eigen::MatrixXd& u,
                                      const Eigen::VectorXd& phi, int n) {
  const int p = static_cast<int>(sigma.rows());
  const int k = std::min(p, n);
  const double dp = static_cast<double>(p);
  Eigen::MatrixXd sh = u * phi.asDiagonal() * u.transpose();
  RiskIdentity out{0.0, 0.0};

  auto col_moment = [&](const Eigen::MatrixXd& f, int i) {
    return u.col(i).dot(f * u.col(i));
  };
  auto zero_trace = [&](const Eigen::MatrixXd& f) {
    const auto u0 = u.rightCols(p - k);
    return (u0.transpose() * f * u0).trace();
  };

  switch (l) {
    case Loss::Frobenius:
      out.lhs = (sigma - sh).squaredNorm();
      out.rhs = sigma.squaredNorm() - phi.squaredNorm();
      break;
    case Loss::InverseFrobenius: {
      Eigen::MatrixXd si = matrix_function(Ell::XInv, sigma);
      out.lhs = (si - matrix_function(Ell::XInv, sh)).squaredNorm();
      out.rhs = si.squaredNorm() - phi.cwiseInverse().squaredNorm();
      break;
    }
    case Loss::WeightedFrobenius: {
      Eigen::MatrixXd d = sh - sigma;
      out.lhs = (d * d * matrix_function(Ell::XInv, sigma)).trace();
      out.rhs = sigma.trace() - phi.sum();
      break;
    }
    case Loss::Disutility: {
      Eigen::MatrixXd si = matrix_function(Ell::XInv, sigma);
      Eigen::MatrixXd d = matrix_function(Ell::XInv, sh) - si;
      out.lhs = (d * d * sigma).trace();
      out.rhs = si.trace() - phi.cwiseInverse().sum();
      break;
    }
    case Loss::InverseStein: {
      Eigen::MatrixXd m = matrix_function(Ell::XInv, sh) * sigma;
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
      double logdet = 0.0;
      for (int i = 0; i < p; ++i)
        logdet += std::log(std::abs(lu.matrixLU()(i, i)));
      out.lhs = m.trace() - dp - logdet;
      double logsig = 0.0;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
      for (int i = 0; i < p; ++i) logsig += std::log(es.eigenvalues()[i]);
      out.rhs = phi.array().log().sum() - logsig;
      break;
    }
    case Loss::Stein: {
      Eigen::MatrixXd m = sh * matrix_function(Ell::XInv, sigma);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
      double logdet = 0.0;
      for (int i = 0; i < p; ++i)
        logdet += std::log(std::abs(lu.matrixLU()(i, i)));
      out.lhs = m.trace() - dp - logdet;
      double logsig = 0.0;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
      for (int i = 0; i < p; ++i) logsig += std::log(es.eigenvalues()[i]);
      out.rhs = logsig - phi.array().log().sum();
      break;
    }
    case Loss::Frechet: {
      out.lhs = (matrix_function(Ell::Sqrt, sh) -
                 matrix_function(Ell::Sqrt, sigma))
                    .squaredNorm();
      out.rhs = sigma.trace() - phi.sum();
      break;
    }
    case Loss::MinimumVariance: {
      Eigen::MatrixXd shi = matrix_function(Ell::XInv, sh);
      const double t = shi.trace();
      out.lhs = dp * (shi * sigma * shi).trace() / (t * t);
      out.rhs = dp / phi.cwiseInverse().sum();
      break;
    }
    case Loss::LogEuclidean: {
      Eigen::MatrixXd ls = matrix_function(Ell::Log, sigma);
      out.lhs = (matrix_function(Ell::Log, sh) - ls).squaredNorm();
      out.rhs = ls.squaredNorm() - phi.array().log().square().sum();
      break;
    }
    case Loss::Quadratic: {
      Eigen::MatrixXd si = matrix_function(Ell::XInv, sigma);
      Eigen::MatrixXd si2 = matrix_function(Ell::XInv2, sigma);
      out.lhs =
          (si * sh - Eigen::MatrixXd::Identity(p, p)).squaredNorm();
      double acc = 0.0;
      for (int i = 0; i < k; ++i) {
        const double a = col_moment(si, i);
        acc += a * a / col_moment(si2, i);
      }
      if (k < p) {
        const double a = zero_trace(si);
        acc += a * a / zero_trace(si2);
      }
      out.rhs = dp - acc;
      break;
    }
    case Loss::InverseQuadratic: {
      Eigen::MatrixXd s2 = matrix_function(Ell::X2, sigma);
      out.lhs = (matrix_function(Ell::XInv, sh) * sigma -
                 Eigen::MatrixXd::Identity(p, p))
                    .squaredNorm();
      double acc = 0.0;
      for (int i = 0; i < k; ++i) {
        const double a = col_moment(sigma, i);
        acc += a * a / col_moment(s2, i);
      }
      if (k < p) {
        const double a = zero_trace(sigma);
        acc += a * a / zero_trace(s2);
      }
      out.rhs = dp - acc;
      break;
    }
    case Loss::SymmetrizedStein: {
      Eigen::MatrixXd si = matrix_function(Ell::XInv, sigma);
      Eigen::MatrixXd shi = matrix_function(Ell::XInv, sh);
      out.lhs = 0.5 * ((sh * si).trace() + (shi * sigma).trace() - 2.0 * dp);
      double acc = 0.0;
      for (int i = 0; i < k; ++i)
        acc += std::sqrt(col_moment(si, i) * col_moment(sigma, i));
      if (k < p)
        acc += std::sqrt(zero_trace(si) * zero_trace(sigma));
      out.rhs = acc - dp;
      break;
    }
  }
  return out;
}

RiskValue asymptotic_risk(Loss l,
                          const std::map<Ell, Eigen::VectorXd>& theta,
                          const Eigen::VectorXd& sig) {
  const int p = static_cast<int>(sig.size());
  const double dp = static_cast<double>(p);
  auto th = [&](Ell e) -> const Eigen::VectorXd& {
    const auto it = theta.find(e);
    if (it == theta.end())
      throw ConfigError(std::string("asymptotic_risk missing theta for ") +
                        ell_name(e));
    return it->second;
  };
  RiskValue out;
  auto guarded_sqrt = [&out](double v) {
    if (v < 0.0) {
      out.clamped = true;
      v = 0.0;
    }
    return std::sqrt(v);
  };
  switch (l) {
    case Loss::Frobenius:
      out.value = guarded_sqrt(
          (sig.array().square() - th(Ell::X).array().square()).sum() / dp);
      break;
    case Loss::InverseStein:
      out.value = (th(Ell::X).array() / sig.array()).log().sum() / dp;
      break;
    case Loss::Disutility:
      out.value =
          1.0 - th(Ell::X).cwiseInverse().sum() / sig.cwiseInverse().sum();
      break;
    case Loss::MinimumVariance:
      out.value = dp * (1.0 / th(Ell::X).cwiseInverse().sum() -
                        1.0 / sig.cwiseInverse().sum());
      break;
    case Loss::InverseFrobenius:
      out.value = guarded_sqrt((sig.array().pow(-2.0) -
                                th(Ell::XInv).array().square())
                                   .sum() /
                               dp);
      break;
    case Loss::Stein:
      out.value = (sig.array() * th(Ell::XInv).array()).log().sum() / dp;
      break;
    case Loss::WeightedFrobenius:
      out.value = 1.0 - th(Ell::XInv).cwiseInverse().sum() / sig.sum();
      break;
    case Loss::Frechet:
      out.value = guarded_sqrt(
          (sig.array() - th(Ell::Sqrt).array().square()).sum() / dp);
      break;
    case Loss::LogEuclidean:
      out.value = guarded_sqrt((sig.array().log().square() -
                                th(Ell::Log).array().square())
                                   .sum() /
                               dp);
      break;
    case Loss::Quadratic:
      out.value = guarded_sqrt(
          1.0 - (th(Ell::XInv).array().square() / th(Ell::XInv2).array())
                    .sum() /
                    dp);
      break;
    case Loss::InverseQuadratic:
      out.value = guarded_sqrt(
          1.0 -
          (th(Ell::X).array().square() / th(Ell::X2).array()).sum() / dp);
      break;
    case Loss::SymmetrizedStein:
      out.value =
          2.0 * ((th(Ell::XInv).array() * th(Ell::X).array()).sqrt().sum() /
                     dp -
                 1.0);
      break;
  }
  return out;
}

}  // namespace specshrink
