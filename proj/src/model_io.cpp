#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <map>

#include "rbs/binary_io.hpp"
#include "rbs/error.hpp"
#include "rbs/pipeline.hpp"

namespace rbs {

namespace {

constexpr char kModelMagic[] = "RBSM0001";
constexpr std::size_t kMagicSize = 8;
constexpr std::size_t kTagSize = 16;
// magic + version + n, r, d + section count
constexpr std::size_t kHeaderSize = kMagicSize + 2 + 4 * 8;
constexpr std::size_t kTableEntrySize = kTagSize + 8 + 8 + 4;

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

std::string svr_tag(std::size_t k) { return "SVR_" + std::to_string(k + 1); }

struct Section {
  std::string tag;
  io::ByteWriter body;
};

nlohmann::json ranges_json(const std::vector<Interval>& ranges) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& iv : ranges) out.push_back({iv.lo, iv.hi});
  return out;
}

}  // namespace

nlohmann::json meta_to_json(const SurrogateModel& model) {
  const auto& m = model.meta;
  nlohmann::json j = m.extra.is_object() ? m.extra : nlohmann::json::object();
  j["n"] = model.cells();
  j["r"] = model.rank();
  j["d_lambda"] = model.param_dims();
  j["parameter_names"] = m.parameter_names;
  j["input_ranges"] = ranges_json(m.input_ranges);
  nlohmann::json named = nlohmann::json::object();
  if (!m.input_ranges.empty()) named["t"] = {m.input_ranges[0].lo, m.input_ranges[0].hi};
  for (std::size_t i = 0; i < m.parameter_names.size() && i + 1 < m.input_ranges.size(); ++i) {
    named[m.parameter_names[i]] = {m.input_ranges[i + 1].lo, m.input_ranges[i + 1].hi};
  }
  j["training_ranges"] = named;
  j["energy_threshold"] = m.energy_threshold;
  j["energy_at_rank"] = m.energy_at_rank;
  j["e"] = m.objective;
  j["e_k"] = m.mode_errors;
  j["constant_modes"] = m.constant_modes;
  j["created"] = m.created;
  return j;
}

namespace {

ModelMeta meta_from_json(const nlohmann::json& j) {
  static const char* const kCoreKeys[] = {"n", "r", "d_lambda", "parameter_names", "input_ranges", "training_ranges",
                                          "energy_threshold", "energy_at_rank", "e", "e_k", "constant_modes",
                                          "created"};
  ModelMeta m;
  m.parameter_names = j.at("parameter_names").get<std::vector<std::string>>();
  for (const auto& iv : j.at("input_ranges")) m.input_ranges.push_back({iv.at(0).get<double>(), iv.at(1).get<double>()});
  m.energy_threshold = j.at("energy_threshold").get<double>();
  m.energy_at_rank = j.at("energy_at_rank").get<double>();
  m.objective = j.at("e").get<double>();
  m.mode_errors = j.at("e_k").get<std::vector<double>>();
  m.constant_modes = j.at("constant_modes").get<std::vector<bool>>();
  m.created = j.at("created").get<std::string>();
  m.extra = j;
  for (const char* key : kCoreKeys) m.extra.erase(key);
  return m;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const SurrogateModel& model) {
  model.validate();
  const auto n = static_cast<std::uint64_t>(model.cells());
  const auto r = static_cast<std::uint64_t>(model.rank());
  const auto d = static_cast<std::uint64_t>(model.standardizer.input_dims());

  std::vector<Section> sections;
  auto add = [&](std::string tag) -> io::ByteWriter& {
    sections.push_back({std::move(tag), {}});
    return sections.back().body;
  };

  add("BASIS").f64s({model.basis.modes.data(), static_cast<std::size_t>(model.basis.modes.size())});
  add("SIGMA").f64s({model.basis.singular_values.data(), static_cast<std::size_t>(model.basis.singular_values.size())});
  {
    auto& w = add("COEFF_STD");
    w.f64s({model.standardizer.coef_mean.data(), r});
    w.f64s({model.standardizer.coef_std.data(), r});
  }
  {
    auto& w = add("INPUT_STD");
    w.f64s({model.standardizer.input_mean.data(), d});
    w.f64s({model.standardizer.input_std.data(), d});
  }
  add("BOUND").f64s({model.bound_constants.data(), n});
  for (std::size_t k = 0; k < model.svrs.size(); ++k) {
    const auto& svr = model.svrs[k];
    auto& w = add(svr_tag(k));
    w.f64(svr.hyper.epsilon);
    w.f64(svr.hyper.c_reg);
    w.f64(svr.hyper.sigma);
    w.u64(static_cast<std::uint64_t>(svr.support_count()));
    w.f64s({svr.support_inputs.data(), static_cast<std::size_t>(svr.support_inputs.size())});
    w.f64s({svr.dual_coefs.data(), static_cast<std::size_t>(svr.dual_coefs.size())});
    w.f64(svr.bias);
  }
  add("META").text(meta_to_json(model).dump());

  io::ByteWriter out;
  out.text({kModelMagic, kMagicSize});
  out.u16(kModelFormatVersion);
  out.u64(n);
  out.u64(r);
  out.u64(d);
  out.u64(sections.size());
  std::uint64_t offset = kHeaderSize + sections.size() * kTableEntrySize;
  for (const auto& s : sections) {
    char tag[kTagSize] = {};
    std::memcpy(tag, s.tag.data(), std::min(s.tag.size(), kTagSize));
    out.bytes(tag, kTagSize);
    out.u64(offset);
    out.u64(s.body.size());
    out.u32(crc32_of(s.body.buffer()));
    offset += s.body.size();
  }
  for (const auto& s : sections) out.bytes(s.body.buffer().data(), s.body.size());
  return std::move(out.buffer());
}

std::vector<SectionInfo> model_sections(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  const std::string magic = r.text(kMagicSize, "magic");
  if (magic != std::string_view(kModelMagic, kMagicSize)) throw FormatError("bad magic: expected \"RBSM0001\"", 0);
  const std::uint16_t version = r.u16("version");
  if (version != kModelFormatVersion) {
    throw UnsupportedVersionError("unsupported model format version " + std::to_string(version) + " (this build reads " +
                                      std::to_string(kModelFormatVersion) + ")",
                                  kMagicSize);
  }
  r.u64("n");
  r.u64("r");
  r.u64("d");
  const std::uint64_t count = r.u64("section count");
  if (count > (bytes.size() - kHeaderSize) / kTableEntrySize) {
    throw FormatError("section count " + std::to_string(count) + " exceeds file size", kHeaderSize - 8);
  }
  std::vector<SectionInfo> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    SectionInfo s;
    std::string tag = r.text(kTagSize, "section tag");
    s.tag = tag.substr(0, tag.find('\0'));
    s.offset = r.u64("section offset");
    s.length = r.u64("section length");
    s.crc = r.u32("section checksum");
    out.push_back(std::move(s));
  }
  return out;
}

SurrogateModel deserialize_model(std::span<const std::uint8_t> bytes) {
  const auto table = model_sections(bytes);
  io::ByteReader header(bytes);
  header.text(kMagicSize, "magic");
  header.u16("version");
  const std::uint64_t n = header.u64("n");
  const std::uint64_t r = header.u64("r");
  const std::uint64_t d = header.u64("d");
  if (n == 0 || r == 0 || d < 2 || r > n) {
    throw FormatError("implausible model dimensions n=" + std::to_string(n) + " r=" + std::to_string(r) +
                          " d=" + std::to_string(d),
                      kMagicSize + 2);
  }

  std::map<std::string, SectionInfo> by_tag;
  for (const auto& s : table) {
    if (s.offset > bytes.size() || s.length > bytes.size() - s.offset) {
      throw FormatError("section " + s.tag + " is truncated: needs bytes [" + std::to_string(s.offset) + ", " +
                            std::to_string(s.offset + s.length) + ") of " + std::to_string(bytes.size()),
                        s.offset);
    }
    if (crc32_of(bytes.subspan(s.offset, s.length)) != s.crc) throw ChecksumError(s.tag, s.offset);
    by_tag[s.tag] = s;
  }
  auto section = [&](const std::string& tag) {
    const auto it = by_tag.find(tag);
    if (it == by_tag.end()) throw FormatError("missing section " + tag);
    return std::pair{io::ByteReader(bytes.subspan(it->second.offset, it->second.length), it->second.offset),
                     it->second};
  };
  auto finish = [](const io::ByteReader& rd, const SectionInfo& s) {
    if (rd.remaining() != 0) {
      throw FormatError("section " + s.tag + " has " + std::to_string(rd.remaining()) + " unexpected trailing bytes",
                        rd.offset());
    }
  };

  SurrogateModel model;
  const auto ni = static_cast<Eigen::Index>(n);
  const auto ri = static_cast<Eigen::Index>(r);
  const auto di = static_cast<Eigen::Index>(d);
  {
    auto [rd, s] = section("BASIS");
    model.basis.modes.resize(ni, ri);
    rd.f64s({model.basis.modes.data(), static_cast<std::size_t>(n * r)}, "basis");
    finish(rd, s);
  }
  {
    auto [rd, s] = section("SIGMA");
    if (s.length % 8 != 0 || s.length / 8 < r) throw FormatError("SIGMA section has invalid length", s.offset);
    model.basis.singular_values.resize(static_cast<Eigen::Index>(s.length / 8));
    rd.f64s({model.basis.singular_values.data(), static_cast<std::size_t>(s.length / 8)}, "singular values");
  }
  {
    auto [rd, s] = section("COEFF_STD");
    model.standardizer.coef_mean.resize(ri);
    model.standardizer.coef_std.resize(ri);
    rd.f64s({model.standardizer.coef_mean.data(), r}, "coefficient means");
    rd.f64s({model.standardizer.coef_std.data(), r}, "coefficient scales");
    finish(rd, s);
  }
  {
    auto [rd, s] = section("INPUT_STD");
    model.standardizer.input_mean.resize(di);
    model.standardizer.input_std.resize(di);
    rd.f64s({model.standardizer.input_mean.data(), d}, "input means");
    rd.f64s({model.standardizer.input_std.data(), d}, "input scales");
    finish(rd, s);
  }
  {
    auto [rd, s] = section("BOUND");
    model.bound_constants.resize(ni);
    rd.f64s({model.bound_constants.data(), n}, "bound constants");
    finish(rd, s);
  }
  for (std::size_t k = 0; k < r; ++k) {
    auto [rd, s] = section(svr_tag(k));
    SvrModel svr;
    svr.hyper.epsilon = rd.f64("epsilon");
    svr.hyper.c_reg = rd.f64("c_reg");
    svr.hyper.sigma = rd.f64("sigma");
    const std::uint64_t n_sv = rd.u64("support vector count");
    if (n_sv > rd.remaining() / 8) throw FormatError("section " + s.tag + " support vector count too large", rd.offset());
    svr.support_inputs.resize(static_cast<Eigen::Index>(n_sv), di);
    rd.f64s({svr.support_inputs.data(), static_cast<std::size_t>(n_sv * d)}, "support inputs");
    svr.dual_coefs.resize(static_cast<Eigen::Index>(n_sv));
    rd.f64s({svr.dual_coefs.data(), static_cast<std::size_t>(n_sv)}, "dual coefficients");
    svr.bias = rd.f64("bias");
    finish(rd, s);
    model.svrs.push_back(std::move(svr));
  }
  {
    auto [rd, s] = section("META");
    const std::string text = rd.text(static_cast<std::size_t>(s.length), "metadata");
    try {
      model.meta = meta_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("invalid META section: ") + e.what(), s.offset);
    }
  }
  model.basis.energy_threshold = model.meta.energy_threshold;
  model.validate();
  return model;
}

void save_model(const SurrogateModel& model, const std::string& path) { io::write_file(path, serialize_model(model)); }

SurrogateModel load_model(const std::string& path) { return deserialize_model(io::read_file(path)); }

}  // namespace rbs
