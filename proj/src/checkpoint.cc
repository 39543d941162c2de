#include "morphkit/checkpoint.h"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "morphkit/errors.h"

namespace morphkit {

namespace {

constexpr char kMagic[4] = {'M', 'K', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) {
    throw DataError("truncated checkpoint");
  }
  T v = 0;
  for (size_t i = sizeof(T); i-- > 0;) v = static_cast<T>((v << 8) | b[i]);
  return v;
}

}  // namespace

void save_checkpoint(std::ostream& out, const ParamSet& params, unsigned float_width) {
  if (float_width != 8 && float_width != 4) {
    throw std::invalid_argument("checkpoint float width must be 4 or 8");
  }
  out.write(kMagic, 4);
  put<uint32_t>(out, kVersion);
  put<uint32_t>(out, float_width);
  put<uint32_t>(out, static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    put<uint32_t>(out, static_cast<uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<uint32_t>(out, static_cast<uint32_t>(p.value.rank()));
    for (size_t d : p.value.shape()) put<uint64_t>(out, d);
    for (double v : p.value.data()) {
      if (float_width == 8) {
        put<uint64_t>(out, std::bit_cast<uint64_t>(v));
      } else {
        put<uint32_t>(out, std::bit_cast<uint32_t>(static_cast<float>(v)));
      }
    }
  }
}

std::vector<NamedTensor> load_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("not a morphkit checkpoint (bad magic)");
  }
  const auto version = get<uint32_t>(in);
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto width = get<uint32_t>(in);
  if (width != 8 && width != 4) throw DataError("bad checkpoint float width");
  const auto count = get<uint32_t>(in);
  std::vector<NamedTensor> out;
  for (uint32_t r = 0; r < count; ++r) {
    const auto len = get<uint32_t>(in);
    if (len > (1u << 16)) throw DataError("corrupt checkpoint record name");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw DataError("truncated checkpoint");
    const auto rank = get<uint32_t>(in);
    if (rank > 8) throw DataError("corrupt checkpoint rank");
    Shape shape(rank);
    for (auto& d : shape) d = get<uint64_t>(in);
    std::vector<double> data(shape_size(shape));
    for (double& v : data) {
      v = width == 8 ? std::bit_cast<double>(get<uint64_t>(in))
                     : static_cast<double>(std::bit_cast<float>(get<uint32_t>(in)));
    }
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

void restore_checkpoint(std::istream& in, ParamSet& params) {
  auto records = load_checkpoint(in);
  if (records.size() != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(records.size()) +
                    " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto& rec : records) {
    const size_t slot = params.find(rec.name);
    if (slot == params.size()) throw DataError("unexpected checkpoint tensor " + rec.name);
    if (params[slot].value.shape() != rec.value.shape()) {
      throw DataError("checkpoint tensor " + rec.name + " has shape " +
                      shape_string(rec.value.shape()) + ", model expects " +
                      shape_string(params[slot].value.shape()));
    }
    params[slot].value = std::move(rec.value);
  }
}

}  // namespace morphkit
