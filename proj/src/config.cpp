#include "splat/config.hpp"

#include "splat/bytes.hpp"
#include "splat/error.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>
#include <variant>
#include <vector>

namespace splat {

namespace {

using FieldRef = std::variant<int*, double*, bool*, uint64_t*, std::string*, ResidualMode*, GateMode*>;

std::vector<std::pair<std::string, FieldRef>> fields(TrainConfig& c) {
  std::vector<std::pair<std::string, FieldRef>> f = {
      {"preset", &c.preset},
      {"seed", &c.seed},
      {"sh_degree", &c.sh_degree},
      {"first_frame_epochs", &c.first_frame_epochs},
      {"residual_epochs", &c.residual_epochs},
      {"masked_fraction", &c.masked_fraction},
      {"lambda_dssim", &c.lambda_dssim},
      {"lambda_reg", &c.lambda_reg},
      {"lambda_std", &c.lambda_std},
      {"lr_position", &c.lr_position},
      {"lr_rotation", &c.lr_rotation},
      {"lr_scale", &c.lr_scale},
      {"lr_opacity", &c.lr_opacity},
      {"lr_sh_dc", &c.lr_sh_dc},
      {"lr_sh_rest", &c.lr_sh_rest},
      {"ff_densify_from", &c.ff_densify_from},
      {"ff_densify_until", &c.ff_densify_until},
      {"ff_densify_interval", &c.ff_densify_interval},
      {"ff_densify_threshold", &c.ff_densify_threshold},
      {"quantize_first_frame_sh", &c.quantize_first_frame_sh},
      {"ff_sh_latent_dim", &c.ff_sh_latent_dim},
      {"ff_sh_latent_lr", &c.ff_sh_latent_lr},
      {"ff_sh_decoder_lr", &c.ff_sh_decoder_lr},
      {"residual_mode", &c.residual_mode},
      {"gate_mode", &c.gate_mode},
      {"stochastic_gates", &c.stochastic_gates},
      {"lr_position_residual", &c.lr_position_residual},
      {"lr_gate", &c.lr_gate},
      {"gate_tau", &c.gate.tau},
      {"gate_gamma0", &c.gate.gamma0},
      {"gate_gamma1", &c.gate.gamma1},
      {"decoder_init_scale", &c.decoder_init_scale},
      {"densify_residual", &c.densify_residual},
      {"densify_from", &c.densify_from},
      {"densify_until", &c.densify_until},
      {"densify_interval", &c.densify_interval},
      {"densify_threshold", &c.densify_threshold},
      {"opacity_floor", &c.opacity_floor},
      {"percent_dense", &c.percent_dense},
      {"added_gate_prob", &c.added_gate_prob},
      {"t_d", &c.t_d},
      {"dilation", &c.dilation},
      {"mask_alpha", &c.mask_alpha},
      {"depth_init", &c.depth_init},
      {"t_z", &c.t_z},
      {"depth_stride", &c.depth_stride},
  };
  for (AttributeKind k : kAllAttributeKinds) {
    const auto i = static_cast<size_t>(k);
    const std::string name(attribute_name(k));
    f.emplace_back("latent_dim." + name, &c.latent_dims[i]);
    f.emplace_back("latent_lr." + name, &c.latent_lrs[i]);
    f.emplace_back("decoder_lr." + name, &c.decoder_lrs[i]);
    f.emplace_back("raw_lr." + name, &c.raw_lrs[i]);
  }
  return f;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Setter {
  const std::string& key;
  const std::string& text;

  [[noreturn]] void bad(const char* what) const {
    fail(ErrorKind::config_error, "bad value for " + key + ": expected " + what + ", got '" + text + "'");
  }
  template <class T> void integral(T* p) const {
    T v{};
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size())
      bad("an integer");
    *p = v;
  }
  void operator()(int* p) const { integral(p); }
  void operator()(uint64_t* p) const { integral(p); }
  void operator()(double* p) const {
    try {
      size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size())
        bad("a number");
      *p = v;
    } catch (const std::logic_error&) {
      bad("a number");
    }
  }
  void operator()(bool* p) const {
    if (text == "true" || text == "1")
      *p = true;
    else if (text == "false" || text == "0")
      *p = false;
    else
      bad("true or false");
  }
  void operator()(std::string* p) const { *p = text; }
  void operator()(ResidualMode* p) const {
    if (text == "quantized")
      *p = ResidualMode::quantized;
    else if (text == "raw")
      *p = ResidualMode::raw;
    else
      bad("quantized or raw");
  }
  void operator()(GateMode* p) const {
    if (text == "learned")
      *p = GateMode::learned;
    else if (text == "always_on")
      *p = GateMode::always_on;
    else
      bad("learned or always_on");
  }
};

struct Printer {
  std::string operator()(int* p) const { return std::to_string(*p); }
  std::string operator()(uint64_t* p) const { return std::to_string(*p); }
  std::string operator()(double* p) const { return format_double(*p); }
  std::string operator()(bool* p) const { return *p ? "true" : "false"; }
  std::string operator()(std::string* p) const { return *p; }
  std::string operator()(ResidualMode* p) const { return *p == ResidualMode::raw ? "raw" : "quantized"; }
  std::string operator()(GateMode* p) const { return *p == GateMode::always_on ? "always_on" : "learned"; }
};

} // namespace

void TrainConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok)
      fail(ErrorKind::config_error, what);
  };
  check(sh_degree >= 0 && sh_degree <= 3, "sh_degree must be in 0..3");
  check(first_frame_epochs >= 0 && residual_epochs >= 0, "epoch counts must be >= 0");
  check(masked_fraction >= 0 && masked_fraction <= 1, "masked_fraction must be in [0,1]");
  check(lambda_dssim >= 0 && lambda_dssim <= 1, "lambda_dssim must be in [0,1]");
  check(lambda_reg >= 0 && lambda_std >= 0, "loss weights must be >= 0");
  check(gate.tau > 0 && gate.gamma0 < 0 && gate.gamma1 > 1,
        "gate needs gate_tau > 0 and gate_gamma0 < 0 < 1 < gate_gamma1");
  for (int d : latent_dims)
    check(d >= 1, "latent dimensions must be >= 1");
  check(ff_sh_latent_dim >= 1, "ff_sh_latent_dim must be >= 1");
  check(dilation >= 1, "dilation must be >= 1");
  check(densify_interval >= 1 && ff_densify_interval >= 1, "densify intervals must be >= 1");
  check(depth_stride >= 1, "depth_stride must be >= 1");
  check(added_gate_prob > 0 && added_gate_prob < 1, "added_gate_prob must be in (0,1)");
}

TrainConfig preset_a() { return TrainConfig{}; }

TrainConfig preset_b() {
  TrainConfig c;
  c.preset = "b";
  c.sh_degree = 3;
  c.first_frame_epochs = 350;
  c.residual_epochs = 15;
  c.masked_fraction = 0.65;
  c.lr_position_residual = 5e-4;
  c.gate = {0.5, -0.1, 1.1};
  c.latent_dims = {6, 8, 3, 8, 12};
  c.latent_lrs = {0.015, 0.007, 0.05, 0.0125, 0.000375};
  c.densify_from = 8;
  c.densify_until = 8;
  c.densify_interval = 1;
  c.t_z = 0.03;
  return c;
}

TrainConfig preset(const std::string& name) {
  if (name == "a")
    return preset_a();
  if (name == "b")
    return preset_b();
  fail(ErrorKind::config_error, "unknown preset '" + name + "' (valid: a, b)");
}

void apply_config(TrainConfig& cfg, const std::map<std::string, std::string>& kv) {
  auto table = fields(cfg);
  std::vector<std::string> unknown;
  for (const auto& [key, value] : kv) {
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == key; });
    if (it == table.end()) {
      unknown.push_back(key);
      continue;
    }
    std::visit(Setter{key, value}, it->second);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown)
      msg += " " + k;
    fail(ErrorKind::config_error, msg);
  }
  cfg.validate();
}

std::string config_to_text(const TrainConfig& cfg) {
  TrainConfig copy = cfg;
  std::ostringstream os;
  for (auto& [key, ref] : fields(copy))
    os << key << " = " << std::visit(Printer{}, ref) << "\n";
  return os.str();
}

uint64_t config_hash(const TrainConfig& cfg) {
  const std::string text = config_to_text(cfg);
  return fnv1a64(text);
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos)
      line.resize(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::config_error, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      fail(ErrorKind::config_error, "line " + std::to_string(lineno) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> load_key_values(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_key_values(std::string(bytes.begin(), bytes.end()));
}

} // namespace splat
