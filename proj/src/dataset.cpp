#include "stsn/dataset.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace stsn {

namespace {

using nlohmann::json;

void put_u16(std::ostream& out, uint16_t v) {
  char b[2] = {char(v & 0xff), char(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char(v >> 24)};
  out.write(b, 4);
}

uint8_t get_u8(std::istream& in) {
  char b = 0;
  if (!in.read(&b, 1)) throw format_error("dataset truncated");
  return uint8_t(b);
}

uint16_t get_u16(std::istream& in) {
  uint16_t lo = get_u8(in);
  return uint16_t(lo | (uint16_t(get_u8(in)) << 8));
}

uint32_t get_u32(std::istream& in) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(get_u8(in)) << (8 * i);
  return v;
}

json panel_to_json(const SymbolicPanel& p) {
  json objs = json::array();
  for (const ObjectSpec& o : p.objects)
    objs.push_back(json::array({o.location, o.shape, o.size, o.color}));
  return objs;
}

SymbolicPanel panel_from_json(const json& j) {
  SymbolicPanel p;
  for (const json& o : j) {
    if (!o.is_array() || o.size() != 4) throw format_error("malformed object entry");
    p.objects.push_back({o[0].get<int64_t>(), o[1].get<int64_t>(), o[2].get<int64_t>(),
                         o[3].get<int64_t>()});
  }
  p.validate();
  return p;
}

}  // namespace

std::string problem_metadata_json(const MatrixProblem& problem) {
  json rules = json::array();
  for (const Rule& r : problem.rules)
    rules.push_back({{"attribute", to_string(r.attribute)},
                     {"kind", to_string(r.kind)},
                     {"payload", r.payload}});
  json context = json::array(), candidates = json::array();
  for (const SymbolicPanel& p : problem.context) context.push_back(panel_to_json(p));
  for (const SymbolicPanel& p : problem.candidates) candidates.push_back(panel_to_json(p));
  json meta = {{"rules", std::move(rules)},
               {"context", std::move(context)},
               {"candidates", std::move(candidates)}};
  return meta.dump();
}

void parse_problem_metadata_json(const std::string& text, MatrixProblem& problem) {
  json meta = json::parse(text, nullptr, false);
  if (meta.is_discarded()) throw format_error("problem metadata is not valid JSON");
  try {
    problem.rules.clear();
    for (const json& r : meta.at("rules"))
      problem.rules.push_back(Rule{attribute_from_string(r.at("attribute").get<std::string>()),
                                   rule_kind_from_string(r.at("kind").get<std::string>()),
                                   r.at("payload").get<std::vector<int64_t>>()});
    const json& ctx = meta.at("context");
    const json& cand = meta.at("candidates");
    if (ctx.size() != 8 || cand.size() != 8)
      throw format_error("metadata must carry 8 context and 8 candidate panels");
    for (size_t i = 0; i < 8; ++i) {
      problem.context[i] = panel_from_json(ctx[i]);
      problem.candidates[i] = panel_from_json(cand[i]);
    }
  } catch (const json::exception& e) {
    throw format_error(std::string("problem metadata: ") + e.what());
  }
}

void write_dataset(const std::vector<MatrixProblem>& problems, const std::string& path) {
  int64_t h = 0, w = 0, c = 1;
  if (!problems.empty()) {
    h = problems.front().image_h;
    w = problems.front().image_w;
    c = problems.front().channels;
  }
  for (const MatrixProblem& p : problems) {
    if (p.image_h != h || p.image_w != w || p.channels != c)
      throw contract_error("all problems in a dataset must share image dimensions");
    if (p.images.size() != 16) throw contract_error("problem is missing rasterized panels");
    if (p.answer < 0 || p.answer > 7) throw contract_error("answer index out of range");
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw format_error("cannot open for writing: " + path);
  out.write("STSN", 4);
  put_u16(out, 1);
  put_u32(out, uint32_t(problems.size()));
  put_u16(out, uint16_t(h));
  put_u16(out, uint16_t(w));
  out.put(char(uint8_t(c)));

  for (const MatrixProblem& p : problems) {
    out.put(char(uint8_t(p.answer)));
    out.put(char(uint8_t(p.type)));
    std::string meta = problem_metadata_json(p);
    put_u32(out, uint32_t(meta.size()));
    out.write(meta.data(), std::streamsize(meta.size()));
    for (const std::vector<uint8_t>& panel : p.images) {
      if (int64_t(panel.size()) != h * w * c)
        throw contract_error("panel byte buffer does not match the header dimensions");
      out.write(reinterpret_cast<const char*>(panel.data()), std::streamsize(panel.size()));
    }
  }
  if (!out) throw format_error("write failed: " + path);
}

std::vector<MatrixProblem> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open for reading: " + path);
  char magic[4] = {};
  if (!in.read(magic, 4) || std::string(magic, 4) != "STSN")
    throw format_error("bad magic bytes (not a dataset file)");
  uint16_t version = get_u16(in);
  if (version != 1) throw format_error("unsupported dataset version " + std::to_string(version));
  uint32_t count = get_u32(in);
  int64_t h = get_u16(in), w = get_u16(in), c = get_u8(in);

  std::vector<MatrixProblem> problems;
  problems.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    MatrixProblem p;
    p.answer = get_u8(in);
    uint8_t type = get_u8(in);
    if (p.answer > 7) throw format_error("answer index out of range");
    if (type > 2) throw format_error("unknown problem type code");
    p.type = ProblemType(type);
    uint32_t meta_len = get_u32(in);
    std::string meta(meta_len, '\0');
    if (meta_len > 0 && !in.read(meta.data(), meta_len)) throw format_error("dataset truncated");
    parse_problem_metadata_json(meta, p);
    p.image_h = h;
    p.image_w = w;
    p.channels = c;
    p.images.resize(16);
    for (auto& panel : p.images) {
      panel.resize(size_t(h * w * c));
      if (!in.read(reinterpret_cast<char*>(panel.data()), std::streamsize(panel.size())))
        throw format_error("dataset truncated");
    }
    problems.push_back(std::move(p));
  }
  return problems;
}

}  // namespace stsn
