// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fvr/core.hpp"

namespace fvr {

// Named classes, each with one or more prompt embeddings. The `free`
// class is implicit (density threshold), never listed here.
struct Vocabulary {
  struct Prompt {
    std::string id;
    std::vector<double> embedding;
  };
  struct Class {
    std::string name;
    std::vector<Prompt> prompts;
  };
  std::vector<Class> classes;
  int dim = 0;

  void validate() const {
    if (classes.empty()) throw domain_error("vocabulary has no classes");
    for (const auto& c : classes) {
      if (c.prompts.empty())
        throw domain_error("vocabulary class without prompts: " + c.name);
      for (const auto& p : c.prompts)
        if (static_cast<int>(p.embedding.size()) != dim)
          throw domain_error("vocabulary embedding dimension mismatch");
    }
  }

  int find_class(const std::string& name) const {
    for (size_t i = 0; i < classes.size(); ++i)
      if (classes[i].name == name) return static_cast<int>(i);
    return -1;
  }

  std::vector<std::vector<double>> all_prompts() const {
    std::vector<std::vector<double>> out;
    for (const auto& c : classes)
      for (const auto& p : c.prompts) out.push_back(p.embedding);
    return out;
  }
};

// ---- vocabulary file ----
//   vocab v1 <L>
//   class <name>
//   prompt <id> <L floats>

inline void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  vocab.validate();
  std::ofstream out(path);
  if (!out) throw io_error("cannot open vocabulary for writing: " + path);
  out << "vocab v1 " << vocab.dim << "\n";
  char buf[64];
  for (const auto& c : vocab.classes) {
    out << "class " << c.name << "\n";
    for (const auto& p : c.prompts) {
      out << "prompt " << p.id;
      for (double x : p.embedding) {
        std::snprintf(buf, sizeof buf, " %.17g", x);
        out << buf;
      }
      out << "\n";
    }
  }
}

inline Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open vocabulary: " + path);
  std::string line;
  Vocabulary v;
  if (!std::getline(in, line)) throw io_error("empty vocabulary: " + path);
  {
    std::istringstream ss(line);
    std::string a, b;
    if (!(ss >> a >> b >> v.dim) || a != "vocab" || b != "v1" || v.dim < 1)
      throw io_error("bad vocabulary header: " + path);
  }
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "class") {
      Vocabulary::Class c;
      if (!(ss >> c.name)) throw io_error("bad class line in " + path);
      v.classes.push_back(c);
    } else if (tag == "prompt") {
      if (v.classes.empty())
        throw io_error("prompt before any class in " + path);
      Vocabulary::Prompt p;
      if (!(ss >> p.id)) throw io_error("bad prompt line in " + path);
      double x;
      while (ss >> x) p.embedding.push_back(x);
      if (static_cast<int>(p.embedding.size()) != v.dim)
        throw io_error("prompt dimension mismatch in " + path);
      v.classes.back().prompts.push_back(p);
    } else {
      throw io_error("unknown vocabulary line '" + tag + "' in " + path);
    }
  }
  v.validate();
  return v;
}

// Synthetic prompt embeddings (stand-in for a text encoder). Class
// centers are drawn well separated; prompts of a class sit on a cone
// around the center. With intrinsic_dim > 0 the whole vocabulary lives
// in a rotated low-dimensional subspace of R^L, mimicking the way a
// small vocabulary occupies a thin slice of a real embedding space.
struct EmbeddingConfig {
  int dim = 64;
  int prompts_per_class = 1;
  double min_class_angle_deg = 50.0;   // pairwise separation of centers
  double min_intra_angle_deg = 25.0;   // pairwise separation within a class
  double cone_angle_deg = 15.0;        // prompt angle from its class center
  int intrinsic_dim = 0;               // 0: full dimension
  uint64_t seed = 0;
};

namespace detail {
inline double angle_between(const std::vector<double>& a,
                            const std::vector<double>& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  double c = d / std::sqrt(na * nb);
  c = std::min(1.0, std::max(-1.0, c));
  return std::acos(c);
}

inline std::vector<double> random_unit(Rng& rng, int dim) {
  std::vector<double> v(dim);
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      n2 += x * x;
    }
  } while (n2 < 1e-12);
  double inv = 1.0 / std::sqrt(n2);
  for (auto& x : v) x *= inv;
  return v;
}
}  // namespace detail

inline Vocabulary make_synthetic_vocabulary(
    const std::vector<std::string>& class_names, const EmbeddingConfig& cfg) {
  if (class_names.empty()) throw config_error("no class names given");
  const int work_dim = cfg.intrinsic_dim > 0
                           ? std::min(cfg.intrinsic_dim, cfg.dim)
                           : cfg.dim;
  Rng rng(mix_seed(cfg.seed, 0x766f6361));
  const double min_class_angle = cfg.min_class_angle_deg * M_PI / 180.0;
  const double min_intra_angle = cfg.min_intra_angle_deg * M_PI / 180.0;
  const double cone = cfg.cone_angle_deg * M_PI / 180.0;

  // Rejection-sample separated class centers in the working dimension.
  std::vector<std::vector<double>> centers;
  for (size_t ci = 0; ci < class_names.size(); ++ci) {
    std::vector<double> cand;
    bool ok = false;
    for (int attempt = 0; attempt < 20000 && !ok; ++attempt) {
      cand = detail::random_unit(rng, work_dim);
      ok = true;
      for (const auto& c : centers)
        if (detail::angle_between(cand, c) < min_class_angle) {
          ok = false;
          break;
        }
    }
    if (!ok)
      throw config_error(
          "cannot place class centers at the requested separation; lower "
          "min_class_angle_deg or the class count");
    centers.push_back(cand);
  }

  Vocabulary vocab;
  vocab.dim = cfg.dim;
  for (size_t ci = 0; ci < class_names.size(); ++ci) {
    Vocabulary::Class cls;
    cls.name = class_names[ci];
    std::vector<std::vector<double>> placed;
    for (int pi = 0; pi < cfg.prompts_per_class; ++pi) {
      std::vector<double> prompt;
      bool ok = false;
      for (int attempt = 0; attempt < 20000 && !ok; ++attempt) {
        if (pi == 0 || cone <= 0.0) {
          prompt = centers[ci];
        } else {
          // center rotated by `cone` toward a random orthogonal direction
          std::vector<double> dir = detail::random_unit(rng, work_dim);
          double proj = 0.0;
          for (int i = 0; i < work_dim; ++i) proj += dir[i] * centers[ci][i];
          double n2 = 0.0;
          for (int i = 0; i < work_dim; ++i) {
            dir[i] -= proj * centers[ci][i];
            n2 += dir[i] * dir[i];
          }
          if (n2 < 1e-12) continue;
          double inv = 1.0 / std::sqrt(n2);
          prompt.resize(work_dim);
          for (int i = 0; i < work_dim; ++i)
            prompt[i] =
                std::cos(cone) * centers[ci][i] + std::sin(cone) * dir[i] * inv;
        }
        ok = true;
        for (const auto& other : placed)
          if (detail::angle_between(prompt, other) < min_intra_angle) {
            ok = false;
            break;
          }
      }
      if (!ok)
        throw config_error(
            "cannot place intra-class prompts; lower min_intra_angle_deg or "
            "raise cone_angle_deg");
      placed.push_back(prompt);
      Vocabulary::Prompt p;
      p.id = cls.name + "_" + std::to_string(pi);
      p.embedding = prompt;
      cls.prompts.push_back(p);
    }
    vocab.classes.push_back(cls);
  }

  if (work_dim < cfg.dim) {
    // Embed the working subspace into R^L via a random orthonormal frame
    // (Gram-Schmidt over random Gaussian columns).
    std::vector<std::vector<double>> frame;
    for (int k = 0; k < work_dim; ++k) {
      std::vector<double> v = detail::random_unit(rng, cfg.dim);
      for (const auto& u : frame) {
        double proj = 0.0;
        for (int i = 0; i < cfg.dim; ++i) proj += v[i] * u[i];
        for (int i = 0; i < cfg.dim; ++i) v[i] -= proj * u[i];
      }
      double n2 = 0.0;
      for (double x : v) n2 += x * x;
      if (n2 < 1e-12) {
        --k;
        continue;
      }
      double inv = 1.0 / std::sqrt(n2);
      for (auto& x : v) x *= inv;
      frame.push_back(v);
    }
    for (auto& cls : vocab.classes)
      for (auto& p : cls.prompts) {
        std::vector<double> lifted(cfg.dim, 0.0);
        for (int k = 0; k < work_dim; ++k)
          for (int i = 0; i < cfg.dim; ++i)
            lifted[i] += p.embedding[k] * frame[k][i];
        p.embedding = std::move(lifted);
      }
  }

  // Separation is a generation-time guarantee; verify it here.
  auto prompts = vocab.all_prompts();
  std::vector<int> owner;
  for (size_t ci = 0; ci < vocab.classes.size(); ++ci)
    for (size_t pi = 0; pi < vocab.classes[ci].prompts.size(); ++pi)
      owner.push_back(static_cast<int>(ci));
  for (size_t i = 0; i < prompts.size(); ++i)
    for (size_t j = i + 1; j < prompts.size(); ++j) {
      double ang = detail::angle_between(prompts[i], prompts[j]);
      double bound = owner[i] == owner[j]
                         ? min_intra_angle
                         : std::max(0.0, min_class_angle - 2.0 * cone);
      if (ang + 1e-9 < bound)
        throw numeric_error("generated embeddings violate separation bound");
    }
  vocab.validate();
  return vocab;
}

}  // namespace fvr
