#include "alpharec/model.hpp"

#include "json.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <limits>

namespace alpharec {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::probe: return "probe";
    case ModelKind::alpharec: return "alpharec";
    case ModelKind::id: return "id";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "probe") return ModelKind::probe;
  if (name == "alpharec") return ModelKind::alpharec;
  if (name == "id") return ModelKind::id;
  throw UsageError("unknown model kind '" + std::string(name) + "'");
}

namespace {

constexpr std::array<char, 4> kMagic{'A', 'R', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& where) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw DataError(where + ": truncated checkpoint at offset " + std::to_string(static_cast<long long>(in.tellg())));
  }
  return value;
}

void put_tensor(std::ostream& out, std::string_view name, const MatrixF& t) {
  put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(t.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(t.cols()));
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"kind", to_string(c.kind)},       {"input_dim", c.input_dim}, {"hidden_dim", c.hidden_dim},
          {"output_dim", c.output_dim},      {"layers", c.layers},       {"leaky_slope", c.leaky_slope},
          {"n_users", c.n_users},            {"n_items", c.n_items}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kind = parse_model_kind(j.at("kind").get<std::string>());
  c.input_dim = j.at("input_dim").get<Index>();
  c.hidden_dim = j.at("hidden_dim").get<Index>();
  c.output_dim = j.at("output_dim").get<Index>();
  c.layers = j.at("layers").get<int>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.n_users = j.at("n_users").get<std::int32_t>();
  c.n_items = j.at("n_items").get<std::int32_t>();
  return c;
}

}  // namespace

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);

  std::uint32_t count = 1;
  model.for_each_tensor([&](std::string_view, const MatrixF&) { ++count; });
  put<std::uint32_t>(out, count);

  const auto meta_text = config_to_json(model.config).dump();
  MatrixF meta(1, static_cast<Index>(meta_text.size()));
  for (std::size_t k = 0; k < meta_text.size(); ++k) meta(0, static_cast<Index>(k)) = static_cast<unsigned char>(meta_text[k]);
  put_tensor(out, "meta", meta);
  model.for_each_tensor([&](std::string_view name, const MatrixF& t) { put_tensor(out, name, t); });
  if (!out) throw DataError("write failed: " + path.string());
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  const auto where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + where);
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw DataError(where + ": not a checkpoint (bad magic)");
  if (get<std::uint32_t>(in, where) != kVersion) throw DataError(where + ": unsupported checkpoint version");
  const auto count = get<std::uint32_t>(in, where);

  std::vector<std::pair<std::string, MatrixF>> tensors;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = get<std::uint16_t>(in, where);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw DataError(where + ": truncated tensor name");
    const auto rows = get<std::uint64_t>(in, where);
    const auto cols = get<std::uint64_t>(in, where);
    if (rows > (1ULL << 32) || cols > (1ULL << 32)) throw DataError(where + ": implausible tensor shape for " + name);
    MatrixF t(static_cast<Index>(rows), static_cast<Index>(cols));
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)))) {
      throw DataError(where + ": truncated tensor " + name);
    }
    if (!t.allFinite()) throw DataError(where + ": non-finite values in tensor " + name);
    tensors.emplace_back(std::move(name), std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(where + ": trailing bytes after last tensor");
  if (tensors.empty() || tensors.front().first != "meta") throw DataError(where + ": missing leading meta tensor");

  std::string meta_text;
  for (Index c = 0; c < tensors.front().second.cols(); ++c) meta_text.push_back(static_cast<char>(tensors.front().second(0, c)));
  Model<float> model;
  try {
    model.config = config_from_json(nlohmann::json::parse(meta_text));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": bad meta tensor: " + e.what());
  }

  std::size_t next = 1;
  model.for_each_tensor([&](std::string_view name, MatrixF& t) {
    if (next >= tensors.size() || tensors[next].first != name) throw DataError(where + ": expected tensor " + std::string(name));
    t = std::move(tensors[next++].second);
  });
  if (next != tensors.size()) throw DataError(where + ": unexpected extra tensors");
  return model;
}

}  // namespace alpharec
