#include "lagnmpc/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace lagnmpc {

namespace {

// Shortest text that parses back to the same double.
std::string short_double(double v) { return fmt::format("{}", v); }

namespace pt = boost::property_tree;

double to_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + v + "' is not a number");
  }
}

template <class Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": '" + v + "' is not an integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

template <class F>
auto wrap(const std::string& key, F&& parse) {
  try {
    return parse();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::string states_to_string(const std::vector<Vector>& states) {
  std::string s;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (i) s += "; ";
    for (Eigen::Index j = 0; j < states[i].size(); ++j) {
      if (j) s += ' ';
      s += short_double(states[i](j));
    }
  }
  return s;
}

std::vector<Vector> states_from_string(const std::string& key, const std::string& v) {
  std::vector<Vector> out;
  for (const auto& item : split(v, ';')) {
    std::istringstream in(item);
    std::vector<double> values;
    std::string token;
    while (in >> token) values.push_back(to_double(key, token));
    if (values.empty()) continue;
    if (values.size() != 2) throw ConfigError(key + ": each state needs two coordinates");
    out.emplace_back(Eigen::Vector2d(values[0], values[1]));
  }
  return out;
}

struct Key {
  std::string name;  // section.key
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define LAGNMPC_DOUBLE(NAME, FIELD)                                                \
  Key{NAME, [](const RunConfig& c) { return short_double(c.FIELD); },              \
      [](RunConfig& c, const std::string& v) { c.FIELD = to_double(NAME, v); }}
#define LAGNMPC_INT(NAME, FIELD, TYPE)                                             \
  Key{NAME, [](const RunConfig& c) { return std::to_string(c.FIELD); },           \
      [](RunConfig& c, const std::string& v) { c.FIELD = to_int<TYPE>(NAME, v); }}

const std::vector<Key>& keys() {
  static const std::vector<Key> table{
      LAGNMPC_DOUBLE("plant.sampling_time", plant.sampling_time),
      LAGNMPC_DOUBLE("plant.input_voltage", plant.input_voltage),
      LAGNMPC_DOUBLE("plant.inductance", plant.inductance),
      LAGNMPC_DOUBLE("plant.capacitance", plant.capacitance),
      LAGNMPC_DOUBLE("plant.load", plant.load),
      LAGNMPC_DOUBLE("plant.x2_ss", x2_ss),
      Key{"mpc.formulation", [](const RunConfig& c) { return std::string(to_string(c.formulation)); },
          [](RunConfig& c, const std::string& v) {
            c.formulation = wrap("mpc.formulation", [&] { return parse_formulation(v); });
          }},
      LAGNMPC_INT("mpc.horizon", mpc.horizon, int),
      LAGNMPC_DOUBLE("mpc.q1", mpc.Q(0, 0)),
      LAGNMPC_DOUBLE("mpc.q2", mpc.Q(1, 1)),
      LAGNMPC_DOUBLE("mpc.p1", mpc.P(0, 0)),
      LAGNMPC_DOUBLE("mpc.p2", mpc.P(1, 1)),
      LAGNMPC_DOUBLE("mpc.r", mpc.R),
      LAGNMPC_INT("mpc.laguerre_size", mpc.laguerre_size, int),
      LAGNMPC_DOUBLE("mpc.laguerre_pole", mpc.laguerre_pole),
      LAGNMPC_DOUBLE("mpc.x1_min", mpc.state_box.lower(0)),
      LAGNMPC_DOUBLE("mpc.x1_max", mpc.state_box.upper(0)),
      LAGNMPC_DOUBLE("mpc.x2_min", mpc.state_box.lower(1)),
      LAGNMPC_DOUBLE("mpc.x2_max", mpc.state_box.upper(1)),
      LAGNMPC_DOUBLE("mpc.u_min", mpc.input_box.lower(0)),
      LAGNMPC_DOUBLE("mpc.u_max", mpc.input_box.upper(0)),
      LAGNMPC_DOUBLE("solver.stationarity_tol", mpc.solver.stationarity_tol),
      LAGNMPC_DOUBLE("solver.constraint_tol", mpc.solver.constraint_tol),
      LAGNMPC_INT("solver.max_iterations", mpc.solver.max_iterations, int),
      LAGNMPC_INT("solver.multistarts", mpc.solver.multistarts, int),
      LAGNMPC_INT("sampling.samples", samples, std::size_t),
      LAGNMPC_INT("training.epochs", train.epochs, int),
      LAGNMPC_DOUBLE("training.lr", train.lr),
      LAGNMPC_DOUBLE("training.weight_decay", train.weight_decay),
      LAGNMPC_INT("training.batch_size", train.batch_size, int),
      LAGNMPC_DOUBLE("training.split", train.split),
      LAGNMPC_DOUBLE("training.gamma1", train.gamma(0)),
      LAGNMPC_DOUBLE("training.gamma2", train.gamma(1)),
      Key{"training.loss", [](const RunConfig& c) { return std::string(to_string(c.train.loss)); },
          [](RunConfig& c, const std::string& v) {
            c.train.loss = wrap("training.loss", [&] { return parse_loss_mode(v); });
          }},
      Key{"training.head", [](const RunConfig& c) { return std::string(to_string(c.train.head)); },
          [](RunConfig& c, const std::string& v) {
            c.train.head = wrap("training.head", [&] { return parse_formulation(v); });
          }},
      LAGNMPC_INT("training.hidden_layers", train.hidden_layers, int),
      LAGNMPC_INT("training.hidden_nodes", train.hidden_nodes, int),
      Key{"controller.kind", [](const RunConfig& c) { return std::string(to_string(c.controller.kind)); },
          [](RunConfig& c, const std::string& v) {
            c.controller.kind = wrap("controller.kind", [&] { return parse_controller_kind(v); });
          }},
      Key{"controller.offset_free", [](const RunConfig& c) { return std::string(c.controller.offset_free ? "true" : "false"); },
          [](RunConfig& c, const std::string& v) { c.controller.offset_free = to_bool("controller.offset_free", v); }},
      LAGNMPC_DOUBLE("controller.epsilon", controller.epsilon),
      LAGNMPC_INT("simulation.steps", steps, int),
      Key{"simulation.initial_states", [](const RunConfig& c) { return states_to_string(c.initial_states); },
          [](RunConfig& c, const std::string& v) {
            c.initial_states = states_from_string("simulation.initial_states", v);
          }},
      LAGNMPC_INT("map.count1", grid_count1, int),
      LAGNMPC_INT("map.count2", grid_count2, int),
      LAGNMPC_INT("fixedpoint.frac_bits", fixed.frac_bits, int),
      LAGNMPC_INT("fixedpoint.repetitions", bench_repetitions, int),
      LAGNMPC_INT("fixedpoint.samples", bench_samples, std::size_t),
      Key{"run.out_dir", [](const RunConfig& c) { return c.out_dir; },
          [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
      LAGNMPC_INT("run.seed", seed, std::uint64_t),
      LAGNMPC_INT("run.threads", threads, int),
  };
  return table;
}

#undef LAGNMPC_DOUBLE
#undef LAGNMPC_INT

const Key& find_key(const std::string& name) {
  for (const auto& k : keys()) {
    if (k.name == name) return k;
  }
  throw ConfigError("unknown configuration key '" + name + "'");
}

void apply(RunConfig& cfg, const std::string& name, std::string value) {
  while (!value.empty() && (value.back() == ' ' || value.back() == '\t' || value.back() == '\r')) value.pop_back();
  while (!value.empty() && (value.front() == ' ' || value.front() == '\t')) value.erase(value.begin());
  find_key(name).set(cfg, value);
}

/// Derived values: the equilibrium follows the plant and reference, all seeds follow run.seed.
void finalize(RunConfig& cfg) {
  try {
    cfg.plant.validate();
    const SteadyState ss = steady_state(cfg.plant, cfg.x2_ss);
    cfg.mpc.x_ss = ss.state();
    cfg.mpc.u_ss = ss.u;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  cfg.mpc.solver.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  cfg.validate();
}

RunConfig with_overrides(RunConfig cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not of the form section.key=value");
    apply(cfg, o.substr(0, eq), o.substr(eq + 1));
  }
  finalize(cfg);
  return cfg;
}

}  // namespace

RunConfig::RunConfig() {
  initial_states = {Eigen::Vector2d(0.01, 0.0), Eigen::Vector2d(0.5, -19.0)};
  mpc.solver.seed = seed;
  train.seed = seed;
}

void RunConfig::validate() const {
  mpc.validate();
  train.validate();
  controller.validate();
  fixed.validate();
  if (samples < 1) throw ConfigError("sampling.samples must be positive");
  if (steps < 1) throw ConfigError("simulation.steps must be positive");
  if (grid_count1 < 1 || grid_count2 < 1) throw ConfigError("map counts must be positive");
  if (bench_repetitions < 100) throw ConfigError("fixedpoint.repetitions must be at least 100");
  if (bench_samples < 1) throw ConfigError("fixedpoint.samples must be positive");
  if (out_dir.empty()) throw ConfigError("run.out_dir must not be empty");
  if (threads < 0) throw ConfigError("run.threads must be nonnegative");
  if (initial_states.empty()) throw ConfigError("simulation.initial_states must list at least one state");
  for (const auto& x : initial_states) {
    if (x.size() != mpc.state_box.dim() || !mpc.state_box.contains(x)) {
      throw ConfigError("initial state (" + format_double(x(0)) + ", " + format_double(x(1)) +
                        ") lies outside the state box");
    }
  }
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& k : keys()) out += k.name + "=" + k.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const {
  // Output location and thread count do not change any result.
  std::string text;
  for (const auto& k : keys()) {
    if (k.name == "run.out_dir" || k.name == "run.threads") continue;
    text += k.name + "=" + k.get(*this) + "\n";
  }
  return hex64(fnv1a64(text));
}

RunConfig parse_config(std::istream& in, const std::vector<std::string>& overrides) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' lies outside any section");
    for (const auto& [key, value] : body) apply(cfg, section + "." + key, value.data());
  }
  return with_overrides(std::move(cfg), overrides);
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, overrides);
}

RunConfig default_config(const std::vector<std::string>& overrides) { return with_overrides(RunConfig{}, overrides); }

void write_config(std::ostream& out, const RunConfig& cfg) {
  std::string section;
  for (const auto& k : keys()) {
    const auto dot = k.name.find('.');
    const std::string s = k.name.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << '\n';
      out << '[' << s << "]\n";
      section = s;
    }
    out << k.name.substr(dot + 1) << " = " << k.get(cfg) << '\n';
  }
}

}  // namespace lagnmpc
