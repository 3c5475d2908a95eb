#include <algorithm>
#include <cmath>
#include <numbers>

#include "swm/error.hpp"
#include "swm/scoring.hpp"
#include "swm/worldmodel.hpp"

namespace swm::wm {
namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMap = Eigen::Map<const Mat>;
using MMap = Eigen::Map<Mat>;

constexpr Eigen::Index D = static_cast<Eigen::Index>(kNumDynamic);
constexpr Eigen::Index S = static_cast<Eigen::Index>(kNumStatic);
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }
double softplus(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }

CMap at(const Vec& v, const ParamBlock& b) { return {v.data() + b.offset, b.rows, b.cols}; }
MMap at(Vec& v, const ParamBlock& b) { return {v.data() + b.offset, b.rows, b.cols}; }

struct GruBlocks {
  ParamBlock Wi, Wh, bi, bh;
};

struct Layout {
  ParamBlock sW, sb, aE;
  std::vector<GruBlocks> gru;
  ParamBlock vW1, vb1, vW2, vb2;
  ParamBlock tW1, tb1, tWmu, tbmu, tWs, tbs;
  ParamBlock oW1, ob1, oW2, ob2;
  Eigen::Index H = 0, Es = 0, Ea = 0;

  explicit Layout(const WorldModelParams& p)
      : sW(p.block("static.W")),
        sb(p.block("static.b")),
        aE(p.block("action.E")),
        vW1(p.block("vent.W1")),
        vb1(p.block("vent.b1")),
        vW2(p.block("vent.W2")),
        vb2(p.block("vent.b2")),
        tW1(p.block("trans.W1")),
        tb1(p.block("trans.b1")),
        tWmu(p.block("trans.W_mu")),
        tbmu(p.block("trans.b_mu")),
        tWs(p.block("trans.W_sigma")),
        tbs(p.block("trans.b_sigma")),
        oW1(p.block("outcome.W1")),
        ob1(p.block("outcome.b1")),
        oW2(p.block("outcome.W2")),
        ob2(p.block("outcome.b2")),
        H(p.config.hidden_dim),
        Es(p.config.static_embed_dim),
        Ea(p.config.action_embed_dim) {
    for (int l = 0; l < p.config.num_layers; ++l) {
      const std::string pre = "gru" + std::to_string(l) + ".";
      gru.push_back({p.block(pre + "W_i"), p.block(pre + "W_h"), p.block(pre + "b_i"), p.block(pre + "b_h")});
    }
    if (static_cast<std::size_t>(p.values.size()) != p.blocks.back().offset + p.blocks.back().size()) {
      throw ContractError("parameter vector does not match its block table");
    }
  }

  Eigen::Index input_dim() const { return 2 * D + Es + Ea; }
};

struct GruCache {
  Mat x, h, r, z, n, hn;
};

Mat gru_forward(const Vec& P, const GruBlocks& g, Eigen::Index H, const Mat& x, const Mat& h, GruCache& c) {
  Mat gi = at(P, g.Wi) * x;
  gi.colwise() += at(P, g.bi).col(0);
  Mat gh = at(P, g.Wh) * h;
  gh.colwise() += at(P, g.bh).col(0);
  c.r = (gi.topRows(H) + gh.topRows(H)).unaryExpr(&sig);
  c.z = (gi.middleRows(H, H) + gh.middleRows(H, H)).unaryExpr(&sig);
  c.hn = gh.bottomRows(H);
  c.n = (gi.bottomRows(H).array() + c.r.array() * c.hn.array()).tanh().matrix();
  c.x = x;
  c.h = h;
  return ((1.0 - c.z.array()) * c.n.array() + c.z.array() * h.array()).matrix();
}

void gru_backward(const Vec& P, Vec& G, const GruBlocks& g, Eigen::Index H, const GruCache& c, const Mat& dh_new,
                  Mat& dx, Mat& dh_prev) {
  const auto dn = (dh_new.array() * (1.0 - c.z.array())).eval();
  const auto dz = (dh_new.array() * (c.h.array() - c.n.array())).eval();
  const auto dan = (dn * (1.0 - c.n.array().square())).eval();
  const auto dar = (dan * c.hn.array() * c.r.array() * (1.0 - c.r.array())).eval();
  const auto daz = (dz * c.z.array() * (1.0 - c.z.array())).eval();
  Mat gi(3 * H, dh_new.cols()), gh(3 * H, dh_new.cols());
  gi << dar.matrix(), daz.matrix(), dan.matrix();
  gh << dar.matrix(), daz.matrix(), (dan * c.r.array()).matrix();
  at(G, g.Wi).noalias() += gi * c.x.transpose();
  at(G, g.bi).col(0) += gi.rowwise().sum();
  at(G, g.Wh).noalias() += gh * c.h.transpose();
  at(G, g.bh).col(0) += gh.rowwise().sum();
  dx.noalias() = at(P, g.Wi).transpose() * gi;
  dh_prev = (dh_new.array() * c.z.array()).matrix();
  dh_prev.noalias() += at(P, g.Wh).transpose() * gh;
}

struct HeadCache {
  Mat c1, u, logit, p, c2, g, mu, raw, sigma;
};

void heads_forward(const Vec& P, const Layout& L, const Mat& hd, const Mat& ea, const Mat& xdyn, double sigma_min,
                   const std::optional<double>& vent_override, HeadCache& c) {
  const Eigen::Index B = hd.cols();
  c.c1.resize(L.H + L.Ea, B);
  c.c1 << hd, ea;
  c.u = at(P, L.vW1) * c.c1;
  c.u.colwise() += at(P, L.vb1).col(0);
  c.u = c.u.cwiseMax(0.0);
  c.logit = at(P, L.vW2) * c.u;
  c.logit.array() += at(P, L.vb2)(0, 0);
  c.p = c.logit.unaryExpr(&sig);
  c.c2.resize(L.H + L.Ea + 1, B);
  if (vent_override) {
    c.c2 << hd, ea, Mat::Constant(1, B, *vent_override);
  } else {
    c.c2 << hd, ea, c.p;
  }
  c.g = at(P, L.tW1) * c.c2;
  c.g.colwise() += at(P, L.tb1).col(0);
  c.g = c.g.cwiseMax(0.0);
  c.mu = xdyn + at(P, L.tWmu) * c.g;
  c.mu.colwise() += at(P, L.tbmu).col(0);
  c.raw = at(P, L.tWs) * c.g;
  c.raw.colwise() += at(P, L.tbs).col(0);
  c.sigma = c.raw.unaryExpr(&softplus).array() + sigma_min;
}

// Returns d loss / d [hd; ea] given d loss / d mu, sigma (via raw) and vent logit.
void heads_backward(const Vec& P, Vec& G, const Layout& L, const HeadCache& c, const Mat& dmu, const Mat& draw,
                    const Mat& dlogit_direct, Mat& dhd, Mat& dea) {
  at(G, L.tWmu).noalias() += dmu * c.g.transpose();
  at(G, L.tbmu).col(0) += dmu.rowwise().sum();
  at(G, L.tWs).noalias() += draw * c.g.transpose();
  at(G, L.tbs).col(0) += draw.rowwise().sum();
  Mat dg = at(P, L.tWmu).transpose() * dmu;
  dg.noalias() += at(P, L.tWs).transpose() * draw;
  dg = (c.g.array() > 0.0).select(dg, 0.0);
  at(G, L.tW1).noalias() += dg * c.c2.transpose();
  at(G, L.tb1).col(0) += dg.rowwise().sum();
  const Mat dc2 = at(P, L.tW1).transpose() * dg;

  const Mat dlogit = dlogit_direct.array() + dc2.bottomRows(1).array() * c.p.array() * (1.0 - c.p.array());
  at(G, L.vW2).noalias() += dlogit * c.u.transpose();
  at(G, L.vb2)(0, 0) += dlogit.sum();
  Mat du = at(P, L.vW2).transpose() * dlogit;
  du = (c.u.array() > 0.0).select(du, 0.0);
  at(G, L.vW1).noalias() += du * c.c1.transpose();
  at(G, L.vb1).col(0) += du.rowwise().sum();
  const Mat dc1 = at(P, L.vW1).transpose() * du;

  dhd = dc2.topRows(L.H) + dc1.topRows(L.H);
  dea = dc2.middleRows(L.H, L.Ea) + dc1.bottomRows(L.Ea);
}

double smooth_l1(double d) { return std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5; }
double smooth_l1_grad(double d) { return std::clamp(d, -1.0, 1.0); }

scoring::FeatureArray clinical_mean(const WorldModelParams& params, const double* statics_clinical, const Mat& mu,
                                    Eigen::Index col) {
  scoring::FeatureArray x{};
  for (std::size_t i = 0; i < kNumStatic; ++i) x[i] = statics_clinical[i];
  for (Eigen::Index d = 0; d < D; ++d) {
    const std::size_t f = dynamic_feature(static_cast<std::size_t>(d));
    x[f] = params.normalization.denormalize(f, mu(d, col));
  }
  return x;
}

struct StepCache {
  std::vector<GruCache> gru;
  std::vector<Mat> drop;  // per layer, applied to that layer's output
  Mat hd;
  HeadCache head;
  Mat y, m, dreg, vlabel, vmask;
  std::vector<int> action, prev_action;  // -1 for inactive columns
  bool any_transition = false;
};

}  // namespace

double combine_loss(const LossComponents& c, const LossWeights& w) {
  return w.nll * c.nll + w.outcome * c.outcome + w.reg * c.reg + w.vent * c.vent;
}

LossComponents compute_loss(const WorldModelParams& params, const Dataset& data, std::span<const Window> batch,
                            const ForwardOptions& options, Eigen::VectorXd* grad, BatchOutputs* outputs) {
  if (batch.empty()) throw ContractError("loss needs at least one window");
  const Layout L(params);
  const auto& cfg = params.config;
  const Vec& P = params.values;
  const auto NL = static_cast<std::size_t>(cfg.num_layers);
  const auto B = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index H = L.H;

  std::size_t tmax = 0;
  for (const auto& w : batch) {
    if (w.trajectory >= data.trajectories.size()) throw ContractError("window refers to a missing trajectory");
    if (w.length == 0 || w.begin + w.length > data.trajectories[w.trajectory].length()) {
      throw ContractError("window exceeds its trajectory");
    }
    tmax = std::max(tmax, w.length);
  }

  Mat stat(S, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& w = batch[static_cast<std::size_t>(b)];
    stat.col(b) = data.trajectories[w.trajectory].x.col(static_cast<Eigen::Index>(w.begin)).head(S);
  }
  Mat es = at(P, L.sW) * stat;
  es.colwise() += at(P, L.sb).col(0);
  const CMap E = at(P, L.aE);

  const bool drop = options.dropout_rng != nullptr && cfg.dropout > 0.0;
  const double keep = 1.0 - cfg.dropout;
  std::bernoulli_distribution coin(keep);
  auto draw_mask = [&](Eigen::Index rows) {
    Mat m(rows, B);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = coin(*options.dropout_rng) ? 1.0 / keep : 0.0;
    return m;
  };

  const scoring::SoftScorer scorer(cfg.temperature);
  LossComponents lc;
  // extended-precision sums keep finite-difference checks clean
  long double sum_nll = 0, sum_vent = 0, sum_reg = 0, sum_out = 0;
  std::vector<StepCache> steps(tmax);
  std::vector<Mat> h(NL, Mat::Zero(H, B));
  Mat hfinal = Mat::Zero(H, B);
  std::vector<std::size_t> last(static_cast<std::size_t>(B));

  for (std::size_t t = 0; t < tmax; ++t) {
    StepCache& sc = steps[t];
    sc.action.assign(static_cast<std::size_t>(B), -1);
    sc.prev_action.assign(static_cast<std::size_t>(B), -1);
    Mat x0 = Mat::Zero(L.input_dim(), B);
    Mat ea = Mat::Zero(L.Ea, B), xdyn = Mat::Zero(D, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& w = batch[static_cast<std::size_t>(b)];
      if (t >= w.length) continue;
      const auto& tr = data.trajectories[w.trajectory];
      const std::size_t gt = w.begin + t;
      const auto c = static_cast<Eigen::Index>(gt);
      const int prev = gt == 0 ? kStartToken : tr.actions[gt - 1];
      sc.prev_action[static_cast<std::size_t>(b)] = prev;
      sc.action[static_cast<std::size_t>(b)] = tr.actions[gt];
      x0.block(0, b, D, 1) = tr.x.col(c).tail(D);
      x0.block(D, b, D, 1) = tr.mask.col(c).tail(D);
      x0.block(2 * D, b, L.Es, 1) = es.col(b);
      x0.block(2 * D + L.Es, b, L.Ea, 1) = E.col(prev);
      ea.col(b) = E.col(tr.actions[gt]);
      xdyn.col(b) = tr.x.col(c).tail(D);
    }
    sc.gru.resize(NL);
    if (drop) sc.drop.resize(NL);
    Mat input = std::move(x0);
    for (std::size_t l = 0; l < NL; ++l) {
      h[l] = gru_forward(P, L.gru[l], H, input, h[l], sc.gru[l]);
      input = h[l];
      if (drop) {
        sc.drop[l] = draw_mask(H);
        input.array() *= sc.drop[l].array();
      }
    }
    sc.hd = std::move(input);
    heads_forward(P, L, sc.hd, ea, xdyn, cfg.sigma_min, std::nullopt, sc.head);

    sc.y = Mat::Zero(D, B);
    sc.m = Mat::Zero(D, B);
    sc.dreg = Mat::Zero(D, B);
    sc.vlabel = Mat::Zero(1, B);
    sc.vmask = Mat::Zero(1, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& w = batch[static_cast<std::size_t>(b)];
      if (t >= w.length) continue;
      const auto& tr = data.trajectories[w.trajectory];
      const std::size_t gt = w.begin + t;
      if (t + 1 == w.length) {
        hfinal.col(b) = sc.hd.col(b);
        last[static_cast<std::size_t>(b)] = t;
      }
      if (gt + 1 >= tr.length()) continue;
      sc.any_transition = true;
      const auto nxt = static_cast<Eigen::Index>(gt + 1);
      sc.y.col(b) = tr.x.col(nxt).tail(D);
      sc.m.col(b) = tr.mask.col(nxt).tail(D);
      const auto& mu = sc.head.mu;
      const auto& sd = sc.head.sigma;
      double abs_err = 0.0, dims = 0.0;
      for (Eigen::Index d = 0; d < D; ++d) {
        if (sc.m(d, b) == 0.0) continue;
        const double z = (sc.y(d, b) - mu(d, b)) / sd(d, b);
        sum_nll += kHalfLog2Pi + std::log(sd(d, b)) + 0.5 * z * z;
        abs_err += std::abs(sc.y(d, b) - mu(d, b));
        dims += 1.0;
      }
      lc.nll_count += dims;

      const auto& next_clin = tr.clinical[gt + 1];
      int vent_label = -1;
      if (tr.mask(static_cast<Eigen::Index>(kVentilation), nxt) != 0.0) {
        vent_label = next_clin[kVentilation] >= 2.5 ? 1 : 0;
        const double lg = sc.head.logit(0, b);
        sum_vent += softplus(lg) - vent_label * lg;
        lc.vent_count += 1.0;
        sc.vlabel(0, b) = vent_label;
        sc.vmask(0, b) = 1.0;
      }

      // soft-score consistency of the predicted mean
      const auto x_hat = clinical_mean(params, tr.clinical[gt].data(), mu, b);
      const double ne = params.discretization.representative_ne_eq(cohort::Action::from_index(tr.actions[gt]).vaso_bin);
      const auto s_sofa = scorer.sofa(x_hat, ne);
      const auto s_sirs = scorer.sirs(x_hat);
      double dl_sofa = 0.0;
      if (tr.mask(static_cast<Eigen::Index>(kSofa), nxt) != 0.0) {
        const double diff = s_sofa.value - next_clin[kSofa];
        sum_reg += smooth_l1(diff);
        dl_sofa = smooth_l1_grad(diff);
      }
      const double diff_sirs = s_sirs.value - tr.sirs[gt + 1];
      sum_reg += smooth_l1(diff_sirs);
      const double dl_sirs = smooth_l1_grad(diff_sirs);
      for (Eigen::Index d = 0; d < D; ++d) {
        const std::size_t f = dynamic_feature(static_cast<std::size_t>(d));
        const double dx = dl_sofa * s_sofa.grad[f] + dl_sirs * s_sirs.grad[f];
        if (dx != 0.0) sc.dreg(d, b) = dx * params.normalization.denormalize_derivative(f, mu(d, b));
      }
      lc.transition_count += 1.0;

      if (outputs) {
        outputs->abs_error_sum.push_back(abs_err);
        outputs->observed_dims.push_back(dims);
        if (vent_label >= 0) {
          outputs->vent_prob.push_back(sc.head.p(0, b));
          outputs->vent_label.push_back(vent_label);
        }
      }
    }
  }

  Mat uo = at(P, L.oW1) * hfinal;
  uo.colwise() += at(P, L.ob1).col(0);
  uo = uo.cwiseMax(0.0);
  Mat lo = at(P, L.oW2) * uo;
  lo.array() += at(P, L.ob2)(0, 0);
  Mat ylab(1, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& w = batch[static_cast<std::size_t>(b)];
    ylab(0, b) = data.trajectories[w.trajectory].outcome;
    sum_out += softplus(lo(0, b)) - ylab(0, b) * lo(0, b);
    if (outputs) {
      outputs->outcome_prob.push_back(sig(lo(0, b)));
      outputs->outcome_label.push_back(data.trajectories[w.trajectory].outcome);
      outputs->outcome_window.push_back(w);
    }
  }
  lc.window_count = static_cast<double>(B);

  const LossWeights& wt = options.weights;
  auto per = [](double sum, double n) { return n > 0.0 ? sum / n : 0.0; };
  lc.nll = per(static_cast<double>(sum_nll), lc.nll_count);
  lc.vent = per(static_cast<double>(sum_vent), lc.vent_count);
  lc.reg = per(static_cast<double>(sum_reg), lc.transition_count);
  lc.outcome = per(static_cast<double>(sum_out), lc.window_count);
  lc.total = combine_loss(lc, wt);
  if (!grad) return lc;

  const double s_nll = per(wt.nll, lc.nll_count);
  const double s_vent = per(wt.vent, lc.vent_count);
  const double s_reg = per(wt.reg, lc.transition_count);
  const double s_out = per(wt.outcome, lc.window_count);

  Vec& G = *grad;
  G = Vec::Zero(P.size());
  MMap dE = at(G, L.aE);

  const Mat dlo = s_out * (lo.unaryExpr(&sig) - ylab);
  at(G, L.oW2).noalias() += dlo * uo.transpose();
  at(G, L.ob2)(0, 0) += dlo.sum();
  Mat duo = at(P, L.oW2).transpose() * dlo;
  duo = (uo.array() > 0.0).select(duo, 0.0);
  at(G, L.oW1).noalias() += duo * hfinal.transpose();
  at(G, L.ob1).col(0) += duo.rowwise().sum();
  const Mat dhf = at(P, L.oW1).transpose() * duo;

  Mat des = Mat::Zero(L.Es, B);
  std::vector<Mat> dh(NL, Mat::Zero(H, B));
  Mat dhd, dea, dx, dprev;
  for (std::size_t t = tmax; t-- > 0;) {
    const StepCache& sc = steps[t];
    Mat dtop = Mat::Zero(H, B);
    if (sc.any_transition) {
      const auto& hc = sc.head;
      const auto inv_var = hc.sigma.array().square().inverse();
      const auto resid = (hc.mu - sc.y).array();
      const Mat dmu = (s_nll * sc.m.array() * resid * inv_var).matrix() + s_reg * sc.dreg;
      const Mat dsig = s_nll * sc.m.array() * (hc.sigma.array().inverse() - resid.square() * inv_var / hc.sigma.array());
      const Mat draw = (dsig.array() * hc.raw.unaryExpr(&sig).array()).matrix();
      const Mat dlogit = s_vent * (sc.vmask.array() * (hc.p - sc.vlabel).array()).matrix();
      heads_backward(P, G, L, hc, dmu, draw, dlogit, dhd, dea);
      dtop += dhd;
      for (Eigen::Index b = 0; b < B; ++b) {
        const int a = sc.action[static_cast<std::size_t>(b)];
        if (a >= 0) dE.col(a) += dea.col(b);
      }
    }
    for (Eigen::Index b = 0; b < B; ++b) {
      if (sc.action[static_cast<std::size_t>(b)] >= 0 && last[static_cast<std::size_t>(b)] == t) {
        dtop.col(b) += dhf.col(b);
      }
    }
    Mat din = std::move(dtop);
    for (std::size_t l = NL; l-- > 0;) {
      if (drop) din.array() *= sc.drop[l].array();
      din += dh[l];
      gru_backward(P, G, L.gru[l], H, sc.gru[l], din, dx, dprev);
      dh[l] = std::move(dprev);
      din = std::move(dx);
    }
    des += din.middleRows(2 * D, L.Es);
    for (Eigen::Index b = 0; b < B; ++b) {
      const int a = sc.prev_action[static_cast<std::size_t>(b)];
      if (a >= 0) dE.col(a) += din.block(2 * D + L.Es, b, L.Ea, 1);
    }
  }
  at(G, L.sW).noalias() += des * stat.transpose();
  at(G, L.sb).col(0) += des.rowwise().sum();
  return lc;
}

// -- inference ---------------------------------------------------------------

EncodedHistory empty_history(const WorldModelParams& params) {
  EncodedHistory h;
  h.hidden.assign(static_cast<std::size_t>(params.config.num_layers), Vec::Zero(params.config.hidden_dim));
  h.last_normalized = Vec::Zero(kNumFeatures);
  h.last_clinical.fill(0.0);
  return h;
}

EncodedHistory encode_step(const WorldModelParams& params, const EncodedHistory& h, const cohort::StateVector& state,
                           int previous_action) {
  const Layout L(params);
  const Vec& P = params.values;
  if (previous_action < 0 || previous_action > kStartToken) throw DomainError("previous action index out of range");
  if (h.hidden.size() != L.gru.size()) throw ContractError("history does not match the model's layer count");
  Vec xn(kNumFeatures);
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (!std::isfinite(state.values[i])) {
      throw ContractError("cannot encode a state with a missing " + std::string(feature_info(i).key));
    }
    xn(static_cast<Eigen::Index>(i)) = params.normalization.normalize(i, state.values[i]);
  }
  Mat x0(L.input_dim(), 1);
  Vec mask(D);
  for (Eigen::Index d = 0; d < D; ++d) mask(d) = state.observed[dynamic_feature(static_cast<std::size_t>(d))] ? 1.0 : 0.0;
  const Mat es = at(P, L.sW) * xn.head(S) + at(P, L.sb);
  x0 << xn.tail(D), mask, es, at(P, L.aE).col(previous_action);

  EncodedHistory out;
  out.hidden.resize(h.hidden.size());
  GruCache cache;
  Mat input = std::move(x0);
  for (std::size_t l = 0; l < L.gru.size(); ++l) {
    input = gru_forward(P, L.gru[l], L.H, input, h.hidden[l], cache);
    out.hidden[l] = input.col(0);
  }
  out.last_normalized = xn;
  out.last_clinical = state.values;
  out.steps = h.steps + 1;
  return out;
}

EncodedHistory encode_history(const WorldModelParams& params, const cohort::Trajectory& trajectory, std::size_t begin,
                              std::size_t end) {
  if (begin >= end || end > trajectory.steps.size()) throw ContractError("encode range is empty or out of bounds");
  const auto imputed = cohort::impute(trajectory, params.normalization);
  EncodedHistory h = empty_history(params);
  for (std::size_t t = begin; t < end; ++t) {
    const int prev = t == 0 ? kStartToken : imputed.steps[t - 1].action.index();
    h = encode_step(params, h, imputed.steps[t].state, prev);
  }
  return h;
}

EncodedHistory encode_recent(const WorldModelParams& params, const cohort::Trajectory& trajectory, std::size_t t) {
  const auto K = static_cast<std::size_t>(params.config.window_k);
  const std::size_t begin = t + 1 > K ? t + 1 - K : 0;
  return encode_history(params, trajectory, begin, t + 1);
}

TransitionPrediction predict_transition(const WorldModelParams& params, const EncodedHistory& h,
                                        const cohort::Action& action, const PredictOptions& options) {
  cohort::validate_action(action);
  if (h.steps == 0) throw ContractError("transition prediction needs at least one encoded step");
  const Layout L(params);
  const Vec& P = params.values;
  HeadCache c;
  const Mat hd = h.hidden.back();
  const Mat ea = at(P, L.aE).col(action.index());
  const Mat xdyn = h.last_normalized.tail(D);
  heads_forward(P, L, hd, ea, xdyn, params.config.sigma_min, options.vent_override, c);

  TransitionPrediction out;
  for (std::size_t i = 0; i < kNumStatic; ++i) {
    out.mu[i] = h.last_normalized(static_cast<Eigen::Index>(i));
    out.sigma[i] = params.config.sigma_min;
  }
  for (Eigen::Index d = 0; d < D; ++d) {
    const std::size_t f = dynamic_feature(static_cast<std::size_t>(d));
    out.mu[f] = c.mu(d, 0);
    out.sigma[f] = c.sigma(d, 0);
  }
  out.vent_prob = c.p(0, 0);
  out.mean_clinical = clinical_mean(params, h.last_clinical.data(), c.mu, 0);
  const scoring::SoftScorer scorer(params.config.temperature);
  out.soft_sofa = scorer.sofa(out.mean_clinical, params.discretization.representative_ne_eq(action.vaso_bin)).value;
  out.soft_sirs = scorer.sirs(out.mean_clinical).value;
  return out;
}

OutcomePrediction predict_outcome(const WorldModelParams& params, const EncodedHistory& h) {
  if (h.steps == 0) throw ContractError("outcome prediction needs at least one encoded step");
  const Layout L(params);
  const Vec& P = params.values;
  Mat u = at(P, L.oW1) * h.hidden.back() + at(P, L.ob1);
  u = u.cwiseMax(0.0);
  const double logit = (at(P, L.oW2) * u)(0, 0) + at(P, L.ob2)(0, 0);
  return {sig(logit)};
}

}  // namespace swm::wm
