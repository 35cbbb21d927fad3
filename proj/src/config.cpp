#include "stsn/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stsn/errors.hpp"

namespace stsn {

std::string to_string(Preset p) {
  switch (p) {
    case Preset::full80: return "full80";
    case Preset::full128: return "full128";
    case Preset::desk: return "desk";
    case Preset::micro: return "micro";
  }
  throw contract_error("unknown preset");
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::standard: return "standard";
    case Regime::recon_pretrain: return "recon_pretrain";
    case Regime::dual_train: return "dual_train";
  }
  throw contract_error("unknown regime");
}

Preset preset_from_string(const std::string& s) {
  if (s == "full80") return Preset::full80;
  if (s == "full128") return Preset::full128;
  if (s == "desk") return Preset::desk;
  if (s == "micro") return Preset::micro;
  throw format_error("unknown preset '" + s + "' (full80|full128|desk|micro)");
}

Regime regime_from_string(const std::string& s) {
  if (s == "standard") return Regime::standard;
  if (s == "recon_pretrain") return Regime::recon_pretrain;
  if (s == "dual_train") return Regime::dual_train;
  throw format_error("unknown regime '" + s + "' (standard|recon_pretrain|dual_train)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw contract_error("batch_size must be positive");
  if (lr <= 0.0) throw contract_error("lr must be positive");
  if (warmup_steps < 0) throw contract_error("warmup_steps must be nonnegative");
  if (epochs < 0) throw contract_error("epochs must be nonnegative");
  if (lambda < 0.0) throw contract_error("lambda must be nonnegative");
  if (image_size < 0 || k_slots < 0 || d_slot < 0 || t_iters < 0 || layers < 0 || heads < 0 ||
      d_head < 0 || d_mlp < 0)
    throw contract_error("architecture overrides must be nonnegative");
  if (dropout >= 1.0) throw contract_error("dropout must lie below 1");
  if (eval_every < 0 || train_eval_limit < 0 || val_eval_limit < 0 || log_every < 1)
    throw contract_error("cadence fields must be nonnegative (log_every positive)");
  if (target_train_acc < 0.0 || target_train_acc > 1.0)
    throw contract_error("target_train_acc must lie in [0, 1]");
  if (replicas < 1) throw contract_error("replicas must be positive");
}

int TrainConfig::active_ablations() const {
  return int(no_slot_attention) + int(no_tcn) + int(small_transformer_L4) +
         int(no_augmentations) + int(no_dropout);
}

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw format_error("config key '" + key + "': expected a boolean, got '" + v + "'");
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw format_error("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t x = std::stoull(v, &pos);
    if (pos != v.size() || (!v.empty() && v[0] == '-')) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw format_error("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw format_error("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_value(TrainConfig& cfg, const std::string& raw_key,
                        const std::string& raw_value) {
  const std::string key = trim(raw_key), v = trim(raw_value);
  if (key == "preset") cfg.preset = preset_from_string(v);
  else if (key == "regime") cfg.regime = regime_from_string(v);
  else if (key == "image_size") cfg.image_size = parse_int(key, v);
  else if (key == "k_slots") cfg.k_slots = parse_int(key, v);
  else if (key == "d_slot") cfg.d_slot = parse_int(key, v);
  else if (key == "t_iters") cfg.t_iters = parse_int(key, v);
  else if (key == "layers") cfg.layers = parse_int(key, v);
  else if (key == "heads") cfg.heads = parse_int(key, v);
  else if (key == "d_head") cfg.d_head = parse_int(key, v);
  else if (key == "d_mlp") cfg.d_mlp = parse_int(key, v);
  else if (key == "dropout") cfg.dropout = parse_double(key, v);
  else if (key == "batch_size") cfg.batch_size = parse_int(key, v);
  else if (key == "lr") cfg.lr = parse_double(key, v);
  else if (key == "warmup_steps") cfg.warmup_steps = parse_int(key, v);
  else if (key == "epochs") cfg.epochs = parse_int(key, v);
  else if (key == "lambda") cfg.lambda = parse_double(key, v);
  else if (key == "seed") cfg.seed = parse_uint(key, v);
  else if (key == "no_slot_attention") cfg.no_slot_attention = parse_bool(key, v);
  else if (key == "no_tcn") cfg.no_tcn = parse_bool(key, v);
  else if (key == "small_transformer_L4") cfg.small_transformer_L4 = parse_bool(key, v);
  else if (key == "no_augmentations") cfg.no_augmentations = parse_bool(key, v);
  else if (key == "no_dropout") cfg.no_dropout = parse_bool(key, v);
  else if (key == "eval_every") cfg.eval_every = parse_int(key, v);
  else if (key == "train_eval_limit") cfg.train_eval_limit = parse_int(key, v);
  else if (key == "val_eval_limit") cfg.val_eval_limit = parse_int(key, v);
  else if (key == "target_train_acc") cfg.target_train_acc = parse_double(key, v);
  else if (key == "log_every") cfg.log_every = parse_int(key, v);
  else if (key == "replicas") cfg.replicas = parse_int(key, v);
  else throw format_error("unknown config key '" + key + "'");
}

namespace {

void parse_json_config(TrainConfig& cfg, const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw format_error("config JSON must be a single object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const nlohmann::json& v = it.value();
    std::string s;
    if (v.is_string()) s = v.get<std::string>();
    else if (v.is_boolean()) s = v.get<bool>() ? "true" : "false";
    else if (v.is_number_unsigned()) s = std::to_string(v.get<uint64_t>());
    else if (v.is_number_integer()) s = std::to_string(v.get<int64_t>());
    else if (v.is_number_float()) {
      std::ostringstream os;
      os.precision(17);
      os << v.get<double>();
      s = os.str();
    } else {
      throw format_error("config key '" + it.key() + "': unsupported JSON value type");
    }
    apply_config_value(cfg, it.key(), s);
  }
}

void parse_kv_config(TrainConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw format_error("config line " + std::to_string(lineno) + ": expected key = value");
    apply_config_value(cfg, t.substr(0, eq), t.substr(eq + 1));
  }
}

}  // namespace

void parse_config_text(TrainConfig& cfg, const std::string& text) {
  size_t b = text.find_first_not_of(" \t\r\n");
  if (b != std::string::npos && text[b] == '{') parse_json_config(cfg, text);
  else parse_kv_config(cfg, text);
}

void load_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  parse_config_text(cfg, ss.str());
}

void apply_config_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides) {
  for (const std::string& o : overrides) {
    size_t eq = o.find('=');
    if (eq == std::string::npos)
      throw format_error("override '" + o + "': expected key=value");
    apply_config_value(cfg, o.substr(0, eq), o.substr(eq + 1));
  }
}

void apply_env_seed(TrainConfig& cfg) {
  const char* env = std::getenv("STSN_SEED");
  if (env != nullptr && *env != '\0') cfg.seed = parse_uint("STSN_SEED", env);
}

ModelConfig resolve_model_config(const TrainConfig& cfg) {
  cfg.validate();
  ModelConfig m;
  switch (cfg.preset) {
    case Preset::full80: m = ModelConfig::full80(); break;
    case Preset::full128: m = ModelConfig::full128(); break;
    case Preset::desk: m = ModelConfig::desk(); break;
    case Preset::micro: m = ModelConfig::micro(); break;
  }
  if (cfg.image_size > 0) {
    m.encoder.image_h = m.encoder.image_w = cfg.image_size;
    m.decoder.image_h = m.decoder.image_w = cfg.image_size;
  }
  if (cfg.k_slots > 0) m.slots.k_slots = cfg.k_slots;
  if (cfg.d_slot > 0) {
    m.slots.d_slot = cfg.d_slot;
    m.decoder.d_slot = cfg.d_slot;
    m.reasoner.d_slot = cfg.d_slot;
  }
  if (cfg.t_iters > 0) m.slots.t_iters = cfg.t_iters;
  if (cfg.layers > 0) m.reasoner.layers = cfg.layers;
  if (cfg.heads > 0) m.reasoner.heads = cfg.heads;
  if (cfg.d_head > 0) m.reasoner.d_head = cfg.d_head;
  if (cfg.d_mlp > 0) m.reasoner.d_mlp = cfg.d_mlp;
  if (cfg.dropout >= 0.0) m.reasoner.dropout = cfg.dropout;
  m.lambda = cfg.lambda;
  // Structural ablations change the architecture; no_augmentations and
  // no_dropout act on the training loop / dropout rate instead.
  if (cfg.no_slot_attention) m.no_slot_attention = true;
  if (cfg.no_tcn) m.reasoner.use_tcn = false;
  if (cfg.small_transformer_L4) m.reasoner.layers = 4;
  if (cfg.no_dropout) m.reasoner.dropout = 0.0;
  m.validate();
  return m;
}

std::string architecture_signature(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "arch/v1"
     << ";in=" << cfg.encoder.in_channels << ";img=" << cfg.encoder.image_h << "x"
     << cfg.encoder.image_w << ";ch=";
  for (size_t i = 0; i < cfg.encoder.channels.size(); ++i)
    os << (i ? "," : "") << cfg.encoder.channels[i];
  os << ";st=";
  for (size_t i = 0; i < cfg.encoder.strides.size(); ++i)
    os << (i ? "," : "") << cfg.encoder.strides[i];
  os << ";k=" << cfg.encoder.kernel << ";p=" << cfg.encoder.pad
     << ";din=" << cfg.encoder.d_inputs << ";K=" << cfg.slots.k_slots
     << ";D=" << cfg.slots.d_slot << ";T=" << cfg.slots.t_iters << ";dec=";
  for (size_t i = 0; i < cfg.decoder.hidden_channels.size(); ++i)
    os << (i ? "," : "") << cfg.decoder.hidden_channels[i];
  os << ";dk=" << cfg.decoder.hidden_kernel << ";ok=" << cfg.decoder.out_kernel
     << ";L=" << cfg.reasoner.layers << ";H=" << cfg.reasoner.heads
     << ";Dh=" << cfg.reasoner.d_head << ";Dm=" << cfg.reasoner.d_mlp
     << ";tcn=" << (cfg.reasoner.use_tcn ? 1 : 0)
     << ";nsa=" << (cfg.no_slot_attention ? 1 : 0);
  return os.str();
}

uint64_t config_hash(const ModelConfig& cfg) {
  const std::string sig = architecture_signature(cfg);
  uint64_t h = 1469598103934665603ull;  // FNV-1a 64-bit offset basis
  for (unsigned char c : sig) {
    h ^= uint64_t(c);
    h *= 1099511628211ull;  // FNV prime
  }
  return h;
}

std::string describe(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "preset=" << to_string(cfg.preset) << "\nregime=" << to_string(cfg.regime)
     << "\nimage_size=" << cfg.image_size << "\nk_slots=" << cfg.k_slots
     << "\nd_slot=" << cfg.d_slot << "\nt_iters=" << cfg.t_iters << "\nlayers=" << cfg.layers
     << "\nheads=" << cfg.heads << "\nd_head=" << cfg.d_head << "\nd_mlp=" << cfg.d_mlp
     << "\ndropout=" << cfg.dropout << "\nbatch_size=" << cfg.batch_size << "\nlr=" << cfg.lr
     << "\nwarmup_steps=" << cfg.warmup_steps << "\nepochs=" << cfg.epochs
     << "\nlambda=" << cfg.lambda << "\nseed=" << cfg.seed
     << "\nno_slot_attention=" << cfg.no_slot_attention << "\nno_tcn=" << cfg.no_tcn
     << "\nsmall_transformer_L4=" << cfg.small_transformer_L4
     << "\nno_augmentations=" << cfg.no_augmentations << "\nno_dropout=" << cfg.no_dropout
     << "\neval_every=" << cfg.eval_every << "\ntrain_eval_limit=" << cfg.train_eval_limit
     << "\nval_eval_limit=" << cfg.val_eval_limit
     << "\ntarget_train_acc=" << cfg.target_train_acc << "\nlog_every=" << cfg.log_every
     << "\nreplicas=" << cfg.replicas << "\n";
  return os.str();
}

}  // namespace stsn
