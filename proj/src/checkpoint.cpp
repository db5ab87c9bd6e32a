#include "levemb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <nlohmann/json.hpp>

#include "levemb/errors.hpp"

namespace levemb {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'L', 'E', 'V', 'E', 'M', 'B', '0', '1'};

struct Entry {
  std::string name;
  const BasicTensor<float>* src = nullptr;
  BasicTensor<float>* dst = nullptr;
};

// Arrays in file order. Works on either a const or a mutable model.
template <typename Model, typename Fn>
void for_each_array(Model& model, Fn&& fn) {
  for (auto* p : model.parameters()) fn(p->name, p->value);
  for (auto* p : model.parameters()) fn(p->name + ".adam_m", p->adam_m);
  for (auto* p : model.parameters()) fn(p->name + ".adam_v", p->adam_v);
  fn(std::string("bn.running_mean"), model.batch_norm().running_mean);
  fn(std::string("bn.running_var"), model.batch_norm().running_var);
}

json spec_json(const ArchitectureSpec& s) {
  return {{"kind", to_string(s.kind)},       {"embedding_dim", s.embedding_dim},
          {"input_len", s.input_len},        {"alphabet_size", s.alphabet_size},
          {"hidden", s.hidden},              {"bn_eps", s.bn_eps}};
}

ArchitectureSpec spec_from_json(const json& j) {
  ArchitectureSpec s;
  s.kind = parse_arch(j.at("kind").get<std::string>());
  s.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  s.input_len = j.at("input_len").get<std::size_t>();
  s.alphabet_size = j.at("alphabet_size").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::size_t>();
  s.bn_eps = j.at("bn_eps").get<double>();
  return s;
}

json meta_json(const CheckpointMeta& m) {
  return {{"loss", m.loss.name()},
          {"epochs", m.epochs},
          {"epochs_completed", m.epochs_completed},
          {"adam_steps", m.adam_steps},
          {"batch_size", m.batch_size},
          {"lr", m.lr},
          {"seed", m.seed},
          {"dataset_hash", m.dataset_hash},
          {"mean_distance", m.mean_distance}};
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta m;
  m.loss = parse_loss(j.at("loss").get<std::string>());
  m.epochs = j.at("epochs").get<std::size_t>();
  m.epochs_completed = j.at("epochs_completed").get<std::size_t>();
  m.adam_steps = j.at("adam_steps").get<std::int64_t>();
  m.batch_size = j.at("batch_size").get<std::size_t>();
  m.lr = j.at("lr").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.dataset_hash = j.at("dataset_hash").get<std::string>();
  m.mean_distance = j.at("mean_distance").get<double>();
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EmbeddingModel<float>& model,
                     const CheckpointMeta& meta) {
  json manifest = json::array();
  std::uint64_t offset = 0;
  std::vector<const BasicTensor<float>*> arrays;
  for_each_array(model, [&](const std::string& name, const BasicTensor<float>& t) {
    const std::uint64_t nbytes = t.size() * sizeof(float);
    manifest.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
    arrays.push_back(&t);
  });
  const json header = {{"format_version", kCheckpointVersion},
                       {"arch", spec_json(model.spec())},
                       {"meta", meta_json(meta)},
                       {"manifest", manifest}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* t : arrays) {
    out.write(reinterpret_cast<const char*>(t->ptr()), static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string() + ": ";
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError(where + "bad magic");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof len);
  if (len > bytes.size() - 16) throw DataError(where + "truncated header");

  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const json::exception& e) {
    throw DataError(where + "unreadable header: " + e.what());
  }

  Checkpoint ck;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw DataError(where + "format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
    }
    const ArchitectureSpec spec = spec_from_json(header.at("arch"));
    spec.validate();
    ck.meta = meta_from_json(header.at("meta"));
    ck.model = std::make_unique<EmbeddingModel<float>>(spec, 0);

    const json& manifest = header.at("manifest");
    const char* payload = bytes.data() + 16 + len;
    const std::uint64_t payload_size = bytes.size() - 16 - len;
    std::size_t index = 0;
    std::uint64_t expected_offset = 0;
    for_each_array(*ck.model, [&](const std::string& name, BasicTensor<float>& t) {
      if (index >= manifest.size()) throw DataError(where + "manifest is missing " + name);
      const json& e = manifest[index++];
      if (e.at("name").get<std::string>() != name) {
        throw DataError(where + "expected array " + name + ", found " + e.at("name").get<std::string>());
      }
      if (e.at("shape").get<Shape>() != t.shape()) {
        throw DataError(where + name + " has shape " + shape_string(e.at("shape").get<Shape>()) +
                        ", architecture needs " + shape_string(t.shape()));
      }
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto nbytes = e.at("nbytes").get<std::uint64_t>();
      if (offset != expected_offset || nbytes != t.size() * sizeof(float) || offset + nbytes > payload_size) {
        throw DataError(where + "bad extent for " + name);
      }
      std::memcpy(t.ptr(), payload + offset, nbytes);
      expected_offset += nbytes;
    });
    if (index != manifest.size()) throw DataError(where + "manifest has unexpected extra arrays");
    if (expected_offset != payload_size) throw DataError(where + "payload size does not match manifest");
  } catch (const json::exception& e) {
    throw DataError(where + "malformed header: " + e.what());
  } catch (const UsageError& e) {
    throw DataError(where + e.what());
  }
  return ck;
}

std::string fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace levemb
