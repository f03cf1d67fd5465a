#include "bbr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bbr/error.hpp"

namespace bbr {
namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string_view line() {
    const auto end = bytes_.find('\n', pos_);
    if (end == std::string_view::npos) throw FormatError("checkpoint manifest is not terminated");
    auto s = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw FormatError("checkpoint is truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

bool valid_token(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c == ' ' || c == '=' || c == '\n' || c == ',' || c == '\r' || c == '\t') return false;
  }
  return true;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto at = s.find(sep, start);
    parts.push_back(s.substr(start, at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return parts;
}

}  // namespace

const Tensor& Checkpoint::tensor(std::string_view name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("checkpoint has no tensor named '" + std::string(name) + "'");
}

const std::string& Checkpoint::field(std::string_view key) const {
  const auto it = fields.find(std::string(key));
  if (it == fields.end()) throw FormatError("checkpoint manifest lacks field '" + std::string(key) + "'");
  return it->second;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic);
  for (const auto& [key, value] : ckpt.fields) {
    if (!valid_token(key) || key == "tensors" || value.find_first_of(" \n\r\t") != std::string::npos ||
        value.empty()) {
      throw FormatError("manifest field '" + key + "' cannot be encoded");
    }
    out += key + "=" + value + " ";
  }
  out += "tensors=";
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    if (!valid_token(ckpt.tensors[i].first)) throw FormatError("invalid tensor name '" + ckpt.tensors[i].first + "'");
    if (i) out += ",";
    out += ckpt.tensors[i].first;
  }
  out += "\n";
  for (const auto& [name, t] : ckpt.tensors) {
    put_u64(out, t.rank());
    for (std::size_t e : t.shape()) put_u64(out, e);
    for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.remaining() < kCheckpointMagic.size() || in.take(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw FormatError("bad checkpoint magic");
  }
  Checkpoint ckpt;
  std::vector<std::string_view> names;
  bool saw_tensors = false;
  for (auto token : split(in.line(), ' ')) {
    if (token.empty()) continue;
    const auto eq = token.find('=');
    if (eq == std::string_view::npos) throw FormatError("malformed manifest token '" + std::string(token) + "'");
    const auto key = token.substr(0, eq);
    const auto value = token.substr(eq + 1);
    if (key == "tensors") {
      saw_tensors = true;
      if (!value.empty()) names = split(value, ',');
    } else {
      ckpt.fields.emplace(std::string(key), std::string(value));
    }
  }
  if (!saw_tensors) throw FormatError("manifest does not list tensors");

  for (auto name : names) {
    const std::uint64_t rank = in.u64();
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    std::uint64_t count = 1;
    for (auto& e : shape) {
      e = in.u64();
      if (e != 0 && count > in.remaining() / 8 / e) {
        throw FormatError("tensor '" + std::string(name) + "' extents exceed the file size");
      }
      count *= e;
    }
    if (count * 8 > in.remaining()) throw FormatError("tensor '" + std::string(name) + "' is truncated");
    std::vector<double> values(count);
    for (auto& v : values) v = in.f64();
    ckpt.tensors.emplace_back(std::string(name), Tensor(std::move(shape), std::move(values)));
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after the last tensor");
  return ckpt;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("short write to " + path.string());
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

void store_network(Checkpoint& ckpt, const Mlp& net, const std::string& prefix) {
  std::string widths;
  for (std::size_t w : net.widths()) widths += (widths.empty() ? "" : ",") + std::to_string(w);
  ckpt.fields[prefix + "widths"] = widths;
  const auto names = net.parameter_names(prefix);
  const auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) ckpt.tensors.emplace_back(names[i], *params[i]);
}

Mlp load_network(const Checkpoint& ckpt, const std::string& prefix) {
  std::vector<std::size_t> widths;
  for (auto w : split(ckpt.field(prefix + "widths"), ',')) {
    try {
      widths.push_back(std::stoull(std::string(w)));
    } catch (const std::exception&) {
      throw FormatError("bad width list for '" + prefix + "'");
    }
  }
  Mlp net;
  try {
    net = Mlp::zeros(widths);
  } catch (const Error& e) {
    throw FormatError(std::string("bad network layout: ") + e.what());
  }
  const auto names = net.parameter_names(prefix);
  const auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& stored = ckpt.tensor(names[i]);
    if (stored.shape() != params[i]->shape()) throw FormatError("tensor '" + names[i] + "' has the wrong shape");
    *params[i] = stored;
  }
  return net;
}

void save_classifier(const Classifier& model, const std::filesystem::path& path,
                     std::map<std::string, std::string> fields) {
  Checkpoint ckpt;
  ckpt.fields = std::move(fields);
  ckpt.fields["kind"] = "classifier";
  store_network(ckpt, model.net(), "");
  write_checkpoint(ckpt, path);
}

Classifier load_classifier(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (!ckpt.has_field("kind") || ckpt.field("kind") != "classifier") {
    throw FormatError(path.string() + " is not a classifier checkpoint");
  }
  return Classifier(load_network(ckpt, ""));
}

}  // namespace bbr
