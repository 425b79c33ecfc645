#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ios>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rwsgd/engine.hpp"

namespace rwsgd {

// Checkpoint layout (text, one record per line, reals in C99 hex-float so that
// a round trip is bit exact):
//
//   rwsgd-checkpoint <version>
//   model <name> <tau>
//   schedule <gamma> <alpha>
//   burn_in <k>
//   weights <name>
//   seed <master seed>
//   plugin <0|1> <pre|post>
//   divergence_limit <x>
//   dim <p>
//   replicates <B>
//   count <n>
//   names <p tokens, percent-encoded>
//   main <iterate p> <avg count_total> <avg mean p> <avg latest p>
//   plugin_state <count> <hessian_sum p*p> <outer_sum p*p>     (when enabled)
//   replicate <id> <key> <iterate p> <avg count_total> <avg mean p> <avg latest p>
//   end
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Ensemble ensemble;
  std::vector<std::string> names;
};

namespace detail {

inline std::string encode_name(const std::string& s) {
  std::ostringstream out;
  for (const unsigned char c : s) {
    if (c <= ' ' || c == '%' || c >= 0x7f) {
      out << '%' << std::hex << std::uppercase << std::setw(2) << std::setfill('0')
          << static_cast<int>(c) << std::dec;
    } else {
      out << c;
    }
  }
  return s.empty() ? std::string("%") : out.str();
}

inline std::string decode_name(const std::string& s) {
  if (s == "%") return {};
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      out.push_back(static_cast<char>(std::stoi(s.substr(i + 1, 2), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

class CheckpointReader {
 public:
  explicit CheckpointReader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw DataError("checkpoint truncated");
    return w;
  }
  void expect(const std::string& key) {
    const auto w = word();
    if (w != key) throw DataError("checkpoint: expected '" + key + "', found '" + w + "'");
  }
  double real() {
    const auto w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end == w.c_str() || *end != '\0') throw DataError("checkpoint: bad real '" + w + "'");
    return v;
  }
  std::uint64_t integer() {
    const auto w = word();
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(w, &pos);
      if (pos != w.size()) throw std::invalid_argument(w);
      return v;
    } catch (const std::exception&) {
      throw DataError("checkpoint: bad integer '" + w + "'");
    }
  }
  ParamVector vector(Index p) {
    ParamVector v(p);
    for (Index i = 0; i < p; ++i) v[i] = real();
    return v;
  }
  Matrix matrix(Index p) {
    Matrix m(p, p);
    for (Index i = 0; i < p; ++i)
      for (Index j = 0; j < p; ++j) m(i, j) = real();
    return m;
  }
  AveragedAccumulator average(Index p, std::uint64_t burn_in) {
    const auto total = integer();
    auto mean = vector(p);
    auto latest = vector(p);
    return AveragedAccumulator::restore(total, burn_in, std::move(mean), std::move(latest));
  }

 private:
  std::istream& in_;
};

inline void write_vector(std::ostream& out, const ParamVector& v) {
  for (Index i = 0; i < v.size(); ++i) out << ' ' << v[i];
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out << ' ' << m(i, j);
}

inline void write_average(std::ostream& out, const AveragedAccumulator& a) {
  out << ' ' << a.count_total();
  write_vector(out, a.raw_mean());
  write_vector(out, a.latest());
}

}  // namespace detail

struct CheckpointAccess {
  static void write(std::ostream& out, const Ensemble& e, const std::vector<std::string>& names) {
    const auto& c = e.config_;
    out << std::hexfloat;
    out << "rwsgd-checkpoint " << kCheckpointVersion << '\n';
    out << "model " << c.model.name() << ' ' << c.model.tau() << '\n';
    out << "schedule " << c.schedule.gamma << ' ' << c.schedule.alpha << '\n';
    out << "burn_in " << c.burn_in << '\n';
    out << "weights " << to_string(c.weights) << '\n';
    out << "seed " << c.seed << '\n';
    out << "plugin " << (c.plugin ? 1 : 0) << ' '
        << (c.plugin_point == PluginPoint::PreUpdate ? "pre" : "post") << '\n';
    out << "divergence_limit " << c.divergence_limit << '\n';
    out << "dim " << e.dim() << '\n';
    out << "replicates " << e.replicates_.size() << '\n';
    out << "count " << e.n_ << '\n';
    out << "names " << names.size();
    for (const auto& n : names) out << ' ' << detail::encode_name(n);
    out << '\n';
    out << "main";
    detail::write_vector(out, e.main_iterate_);
    detail::write_average(out, e.main_average_);
    out << '\n';
    if (e.plugin_) {
      out << "plugin_state " << e.plugin_->count();
      detail::write_matrix(out, e.plugin_->hessian_sum());
      detail::write_matrix(out, e.plugin_->outer_sum());
      out << '\n';
    }
    for (const auto& r : e.replicates_) {
      out << "replicate " << r.id << ' ' << r.rng.key();
      detail::write_vector(out, r.iterate);
      detail::write_average(out, r.average);
      out << '\n';
    }
    out << "end\n";
    out << std::defaultfloat;
  }

  static Checkpoint read(std::istream& in) {
    detail::CheckpointReader rd(in);
    if (rd.word() != "rwsgd-checkpoint") throw DataError("not a checkpoint file");
    const auto version = rd.integer();
    if (version != kCheckpointVersion) {
      throw DataError("checkpoint version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kCheckpointVersion) +
                      ")");
    }
    Ensemble e;
    auto& c = e.config_;
    rd.expect("model");
    const auto model = rd.word();
    const double tau = rd.real();
    c.model = ModelKind::parse(model, tau);
    rd.expect("schedule");
    c.schedule.gamma = rd.real();
    c.schedule.alpha = rd.real();
    rd.expect("burn_in");
    c.burn_in = rd.integer();
    rd.expect("weights");
    c.weights = parse_weight_distribution(rd.word());
    rd.expect("seed");
    c.seed = rd.integer();
    rd.expect("plugin");
    c.plugin = rd.integer() != 0;
    c.plugin_point = rd.word() == "pre" ? PluginPoint::PreUpdate : PluginPoint::PostUpdate;
    rd.expect("divergence_limit");
    c.divergence_limit = rd.real();
    rd.expect("dim");
    const auto p = static_cast<Index>(rd.integer());
    rd.expect("replicates");
    c.replicates = rd.integer();
    c.validate();
    if (p < 1) throw DataError("checkpoint dimension must be positive");
    rd.expect("count");
    e.n_ = rd.integer();

    Checkpoint cp{std::move(e), {}};
    Ensemble& en = cp.ensemble;
    const EnsembleConfig& cfg = en.config_;
    rd.expect("names");
    const auto n_names = rd.integer();
    for (std::uint64_t i = 0; i < n_names; ++i) cp.names.push_back(detail::decode_name(rd.word()));

    rd.expect("main");
    en.main_iterate_ = rd.vector(p);
    en.main_average_ = rd.average(p, cfg.burn_in);
    if (cfg.plugin && cfg.model.has_hessian()) {
      rd.expect("plugin_state");
      const auto count = rd.integer();
      auto h = rd.matrix(p);
      auto v = rd.matrix(p);
      en.plugin_ = SandwichInputs::restore(count, std::move(h), std::move(v));
    }
    en.replicates_.reserve(cfg.replicates);
    for (std::size_t b = 0; b < cfg.replicates; ++b) {
      rd.expect("replicate");
      ReplicateState r;
      r.id = rd.integer();
      r.rng = CounterStream(rd.integer());
      r.iterate = rd.vector(p);
      r.average = rd.average(p, cfg.burn_in);
      en.replicates_.push_back(std::move(r));
    }
    rd.expect("end");
    return cp;
  }
};

inline void save_checkpoint(std::ostream& out, const Ensemble& ensemble,
                            const std::vector<std::string>& names = {}) {
  CheckpointAccess::write(out, ensemble, names);
}

inline Checkpoint load_checkpoint(std::istream& in) { return CheckpointAccess::read(in); }

inline void save_checkpoint_file(const std::string& path, const Ensemble& ensemble,
                                 const std::vector<std::string>& names = {}) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  save_checkpoint(out, ensemble, names);
  if (!out) throw ConfigError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace rwsgd
