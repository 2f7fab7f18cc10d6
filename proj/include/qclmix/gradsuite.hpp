#pragma once

#include <functional>
#include <string>
#include <vector>

#include "qclmix/gradcheck.hpp"
#include "qclmix/losses.hpp"
#include "qclmix/model.hpp"
#include "qclmix/rng.hpp"

namespace qclmix {

// Seeded finite-difference verification of every differentiable operation,
// every loss component, and the hybrid loss through the full model. Shared by
// the `gradcheck` CLI command and the acceptance suite.

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  int instances = 0;
  double threshold = 1e-4;
  bool passed() const { return max_rel_err < threshold; }
};

namespace gradsuite {

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -2.0,
                            double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<int> random_labels(int n, int num_classes, Rng& rng) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int& v : y) v = static_cast<int>(rng.bounded(num_classes));
  // Guarantee at least two classes so pairwise terms are exercised.
  if (n >= 2) {
    y[0] = 0;
    y[1] = 1 % num_classes;
  }
  return y;
}

// Central differences are invalid when the +-h window straddles a hinge or
// relu kink; a failing instance is re-probed with a 100x narrower step. An
// actually-wrong analytic gradient keeps failing at every step size, so the
// refinement cannot hide real defects.
inline double checked_error(const std::function<Tensor(const Tensor&)>& fn,
                            const Tensor& x, double threshold, double h) {
  double err = grad_check(fn, x, h);
  if (err >= threshold) err = grad_check(fn, x, h * 1e-2);
  return err;
}

// Run `instances` checks of a scalar function family; each instance draws its
// own input via `make`.
inline GradCheckReport run_family(
    const std::string& name, Rng& rng, int instances,
    const std::function<std::pair<std::function<Tensor(const Tensor&)>, Tensor>(
        Rng&)>& make,
    double threshold = 1e-4, double h = 1e-5) {
  GradCheckReport rep;
  rep.name = name;
  rep.instances = instances;
  rep.threshold = threshold;
  for (int i = 0; i < instances; ++i) {
    auto [fn, x] = make(rng);
    rep.max_rel_err = std::max(rep.max_rel_err, checked_error(fn, x, threshold, h));
  }
  return rep;
}

}  // namespace gradsuite

// Every report in a fixed order; `filter` restricts by substring match.
inline std::vector<GradCheckReport> run_grad_suite(
    std::uint64_t seed = 42, int instances = 20,
    const std::string& filter = "") {
  using gradsuite::random_labels;
  using gradsuite::random_tensor;
  using gradsuite::run_family;

  Rng root = Rng(seed).fork(0x67726164ULL);
  std::vector<GradCheckReport> reports;
  auto want = [&](const std::string& name) {
    return filter.empty() || name.find(filter) != std::string::npos;
  };
  auto add_check = [&](const std::string& name,
                 const std::function<std::pair<
                     std::function<Tensor(const Tensor&)>, Tensor>(Rng&)>& make,
                 double threshold = 1e-4) {
    if (!want(name)) return;
    Rng rng = root.fork(std::hash<std::string>{}(name));
    reports.push_back(run_family(name, rng, instances, make, threshold));
  };

  // --- elementwise ops, each reduced with a weighted sum so every
  //     coordinate's derivative matters
  auto weighted = [](Rng& rng, std::vector<int> shape,
                     const std::function<Tensor(const Tensor&)>& op,
                     double lo = -2.0, double hi = 2.0) {
    Tensor x = random_tensor(shape, rng, lo, hi);
    Tensor w = random_tensor(shape, rng, 0.5, 1.5);
    std::function<Tensor(const Tensor&)> fn =
        [op, w](const Tensor& t) { return reduce_sum(mul(op(t), w)); };
    return std::pair{fn, x};
  };

  add_check("op.cos", [&](Rng& rng) {
    return weighted(rng, {3, 4}, [](const Tensor& t) { return cos(t); });
  });
  add_check("op.sin", [&](Rng& rng) {
    return weighted(rng, {3, 4}, [](const Tensor& t) { return sin(t); });
  });
  add_check("op.sigmoid", [&](Rng& rng) {
    return weighted(rng, {3, 4}, [](const Tensor& t) { return sigmoid(t); });
  });
  add_check("op.exp", [&](Rng& rng) {
    return weighted(rng, {3, 4}, [](const Tensor& t) { return exp(t); });
  });
  add_check("op.log", [&](Rng& rng) {
    return weighted(rng, {3, 4}, [](const Tensor& t) { return log(t); }, 0.2,
                    3.0);
  });
  add_check("op.relu", [&](Rng& rng) {
    // Keep values away from the kink so central differences are valid.
    Tensor x = random_tensor({3, 4}, rng);
    for (double& v : x.data())
      if (std::fabs(v) < 0.05) v += v >= 0.0 ? 0.1 : -0.1;
    Tensor w = random_tensor({3, 4}, rng, 0.5, 1.5);
    std::function<Tensor(const Tensor&)> fn = [w](const Tensor& t) {
      return reduce_sum(mul(relu(t), w));
    };
    return std::pair{fn, x};
  });
  add_check("op.leaky_relu", [&](Rng& rng) {
    Tensor x = random_tensor({3, 4}, rng);
    for (double& v : x.data())
      if (std::fabs(v) < 0.05) v += v >= 0.0 ? 0.1 : -0.1;
    Tensor w = random_tensor({3, 4}, rng, 0.5, 1.5);
    std::function<Tensor(const Tensor&)> fn = [w](const Tensor& t) {
      return reduce_sum(mul(leaky_relu(t, 0.01), w));
    };
    return std::pair{fn, x};
  });
  add_check("op.neg", [&](Rng& rng) {
    return weighted(rng, {3, 4}, [](const Tensor& t) { return neg(t); });
  });
  add_check("op.square", [&](Rng& rng) {
    return weighted(rng, {3, 4}, [](const Tensor& t) { return square(t); });
  });
  add_check("op.sqrt", [&](Rng& rng) {
    return weighted(rng, {3, 4}, [](const Tensor& t) { return sqrt(t); }, 0.3,
                    4.0);
  });
  add_check("op.powc", [&](Rng& rng) {
    return weighted(rng, {3, 4}, [](const Tensor& t) { return powc(t, 3.0); },
                    0.1, 2.0);
  });

  // --- structural ops
  add_check("op.matmul", [&](Rng& rng) {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    Tensor w = random_tensor({3, 5}, rng, 0.5, 1.5);
    std::function<Tensor(const Tensor&)> fn = [b, w](const Tensor& t) {
      return reduce_sum(mul(matmul(t, b), w));
    };
    return std::pair{fn, a};
  });
  add_check("op.matmul_rhs", [&](Rng& rng) {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    Tensor w = random_tensor({3, 5}, rng, 0.5, 1.5);
    std::function<Tensor(const Tensor&)> fn = [a, w](const Tensor& t) {
      return reduce_sum(mul(matmul(a, t), w));
    };
    return std::pair{fn, b};
  });
  add_check("op.reduce_mean", [&](Rng& rng) {
    Tensor x = random_tensor({4, 3}, rng);
    std::function<Tensor(const Tensor&)> fn = [](const Tensor& t) {
      return reduce_mean(t);
    };
    return std::pair{fn, x};
  });
  add_check("op.sum_axis0", [&](Rng& rng) {
    Tensor x = random_tensor({4, 3}, rng);
    Tensor w = random_tensor({3}, rng, 0.5, 1.5);
    std::function<Tensor(const Tensor&)> fn = [w](const Tensor& t) {
      return reduce_sum(mul(sum_axis(t, 0), w));
    };
    return std::pair{fn, x};
  });
  add_check("op.sum_axis1", [&](Rng& rng) {
    Tensor x = random_tensor({4, 3}, rng);
    Tensor w = random_tensor({4, 1}, rng, 0.5, 1.5);
    std::function<Tensor(const Tensor&)> fn = [w](const Tensor& t) {
      return reduce_sum(mul(sum_axis(t, 1), w));
    };
    return std::pair{fn, x};
  });
  add_check("op.softmax", [&](Rng& rng) {
    return weighted(rng, {4, 5}, [](const Tensor& t) { return softmax(t, 1); });
  });
  add_check("op.batchnorm.input", [&](Rng& rng) {
    Tensor x = random_tensor({8, 4}, rng);
    Tensor gamma = random_tensor({4}, rng, 0.5, 1.5);
    Tensor beta = random_tensor({4}, rng, -0.5, 0.5);
    Tensor w = random_tensor({8, 4}, rng, 0.5, 1.5);
    std::function<Tensor(const Tensor&)> fn = [gamma, beta,
                                               w](const Tensor& t) {
      Tensor rm = Tensor::zeros({4});
      Tensor rv = Tensor::from({4}, {1.0, 1.0, 1.0, 1.0});
      return reduce_sum(
          mul(batchnorm(t, gamma, beta, rm, rv, Mode::train), w));
    };
    return std::pair{fn, x};
  });
  add_check("op.batchnorm.gamma", [&](Rng& rng) {
    Tensor x = random_tensor({8, 4}, rng);
    Tensor gamma = random_tensor({4}, rng, 0.5, 1.5);
    Tensor beta = random_tensor({4}, rng, -0.5, 0.5);
    Tensor w = random_tensor({8, 4}, rng, 0.5, 1.5);
    std::function<Tensor(const Tensor&)> fn = [x, beta, w](const Tensor& g) {
      Tensor rm = Tensor::zeros({4});
      Tensor rv = Tensor::from({4}, {1.0, 1.0, 1.0, 1.0});
      return reduce_sum(
          mul(batchnorm(x, g, beta, rm, rv, Mode::train), w));
    };
    return std::pair{fn, gamma};
  });

  // --- loss components on random batches (labels fixed per instance)
  const int B = 8, C = 3, E = 5;
  add_check("loss.focal", [&](Rng& rng) {
    Tensor logits = random_tensor({B, C}, rng);
    auto y = random_labels(B, C, rng);
    std::function<Tensor(const Tensor&)> fn = [y](const Tensor& t) {
      return focal_loss(t, y, 3.0);
    };
    return std::pair{fn, logits};
  });
  add_check("loss.intra.emb", [&](Rng& rng) {
    Tensor emb = random_tensor({B, E}, rng);
    Tensor cent = random_tensor({C, E}, rng);
    auto y = random_labels(B, C, rng);
    std::function<Tensor(const Tensor&)> fn = [y, cent](const Tensor& t) {
      return intra_variance(t, y, cent);
    };
    return std::pair{fn, emb};
  });
  add_check("loss.intra.centroids", [&](Rng& rng) {
    Tensor emb = random_tensor({B, E}, rng);
    Tensor cent = random_tensor({C, E}, rng);
    auto y = random_labels(B, C, rng);
    std::function<Tensor(const Tensor&)> fn = [y, emb](const Tensor& t) {
      return intra_variance(emb, y, t);
    };
    return std::pair{fn, cent};
  });
  add_check("loss.inter", [&](Rng& rng) {
    Tensor cent = random_tensor({C, E}, rng);
    std::function<Tensor(const Tensor&)> fn = [](const Tensor& t) {
      return inter_separation(t, {0, 1, 2});
    };
    return std::pair{fn, cent};
  });
  add_check("loss.supcon", [&](Rng& rng) {
    Tensor emb = random_tensor({B, E}, rng);
    auto y = random_labels(B, C, rng);
    std::function<Tensor(const Tensor&)> fn = [y](const Tensor& t) {
      return supcon_loss(t, y, 0.2);
    };
    return std::pair{fn, emb};
  });
  add_check("loss.triplet", [&](Rng& rng) {
    Tensor emb = random_tensor({B, E}, rng);
    auto y = random_labels(B, C, rng);
    // Freeze the mined triplets so the checked function is smooth; hinge
    // terms on the boundary would invalidate the finite difference.
    auto triplets = ms_mine_triplets(emb, y, 0.1);
    std::function<Tensor(const Tensor&)> fn = [triplets](const Tensor& t) {
      return triplet_loss(t, triplets, 0.5);
    };
    return std::pair{fn, emb};
  });
  add_check("loss.hybrid.logits", [&](Rng& rng) {
    Tensor logits = random_tensor({B, C}, rng);
    Tensor emb = random_tensor({B, E}, rng);
    Tensor cent = random_tensor({C, E}, rng);
    auto y = random_labels(B, C, rng);
    LossConfig cfg;
    std::function<Tensor(const Tensor&)> fn = [emb, cent, y,
                                               cfg](const Tensor& t) {
      return hybrid_loss(t, emb, y, cent, cfg).total;
    };
    return std::pair{fn, logits};
  });
  add_check("loss.hybrid.emb", [&](Rng& rng) {
    Tensor logits = random_tensor({B, C}, rng);
    Tensor emb = random_tensor({B, E}, rng);
    Tensor cent = random_tensor({C, E}, rng);
    auto y = random_labels(B, C, rng);
    LossConfig cfg;
    auto triplets = ms_mine_triplets(emb, y, cfg.miner_epsilon);
    std::function<Tensor(const Tensor&)> fn = [logits, cent, y, cfg,
                                               triplets](const Tensor& t) {
      FvlResult fvl = focal_variance_loss(logits, y, t, cent, cfg);
      Tensor metric = add(supcon_loss(t, y, cfg.tau),
                          triplet_loss(t, triplets, cfg.margin));
      return add(scale(fvl.total, cfg.alpha_loss),
                 scale(metric, 1.0 - cfg.alpha_loss));
    };
    return std::pair{fn, emb};
  });
  add_check("loss.hybrid.centroids", [&](Rng& rng) {
    Tensor logits = random_tensor({B, C}, rng);
    Tensor emb = random_tensor({B, E}, rng);
    Tensor cent = random_tensor({C, E}, rng);
    auto y = random_labels(B, C, rng);
    LossConfig cfg;
    std::function<Tensor(const Tensor&)> fn = [logits, emb, y,
                                               cfg](const Tensor& t) {
      return hybrid_loss(logits, emb, y, t, cfg).total;
    };
    return std::pair{fn, cent};
  });

  // --- hybrid loss through the full model, one parameter group at a time.
  // A slim configuration keeps the finite-difference sweep quick; the wiring
  // is identical to the default widths.
  {
    ModelConfig mc;
    mc.input_dim = 5;
    mc.num_classes = 3;
    mc.hidden1 = 12;
    mc.hidden2 = 8;
    mc.proj_hidden = 6;
    mc.emb_dim = 4;
    const std::vector<std::string> groups = {
        "theta1",    "theta2", "attn.Wq", "attn.Wk", "attn.Wv", "attn.Wo",
        "fc1.w",     "fc1.b",  "bn1.gamma", "bn1.beta", "fc2.w", "fc2.b",
        "proj1.w",   "pbn.gamma", "proj2.w", "fc3.w",  "fc3.b", "centroids"};
    for (const auto& group : groups) {
      const std::string name = "model." + group;
      if (!want(name)) continue;
      Rng rng = root.fork(std::hash<std::string>{}(name));
      GradCheckReport rep;
      rep.name = name;
      rep.instances = instances;
      for (int inst = 0; inst < instances; ++inst) {
        const std::uint64_t param_seed = rng.next_u64();
        Tensor bx = random_tensor({8, mc.input_dim}, rng, -1.5, 1.5);
        auto by = random_labels(8, mc.num_classes, rng);
        LossConfig lc;
        ModelParams proto = init_params(mc, param_seed);
        Tensor start;
        for (auto ref : proto.learnable())
          if (ref.name == group) start = ref.tensor->clone();

        // Mining is a discrete selection with zero derivative almost
        // everywhere; freeze it at the base point so the finite difference
        // probes a smooth function with the same analytic gradient.
        std::vector<TripletIndex> triplets;
        {
          ModelParams p0 = proto.clone();
          ForwardOutput out0 = model_forward(bx, p0, mc, Mode::train);
          triplets = ms_mine_triplets(out0.embedding, by, lc.miner_epsilon);
        }

        std::function<Tensor(const Tensor&)> fn = [=](const Tensor& t) mutable {
          ModelParams p = proto.clone();
          for (auto ref : p.learnable())
            if (ref.name == group) {
              if (t.requires_grad())
                *ref.tensor = t;
              else
                ref.tensor->data() = t.data();
            }
          ForwardOutput out = model_forward(bx, p, mc, Mode::train);
          FvlResult fvl =
              focal_variance_loss(out.logits, by, out.embedding, p.centroids, lc);
          Tensor metric = add(supcon_loss(out.embedding, by, lc.tau),
                              triplet_loss(out.embedding, triplets, lc.margin));
          return add(scale(fvl.total, lc.alpha_loss),
                     scale(metric, 1.0 - lc.alpha_loss));
        };
        rep.max_rel_err = std::max(
            rep.max_rel_err,
            gradsuite::checked_error(fn, start, rep.threshold, 1e-5));
      }
      reports.push_back(rep);
    }
  }

  return reports;
}

}  // namespace qclmix
