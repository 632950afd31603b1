#include "orid/array_io.hpp"

#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace orid::io {

namespace {

constexpr char kNpyMagic[] = "\x93NUMPY";
constexpr char kMaskMagic[] = "ORIDMASK 1\n";

static_assert(sizeof(float) == 4 && sizeof(double) == 8);

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string encode_image_npy(const Image& img) {
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(img.height) +
                       ", " + std::to_string(img.width) + ", " + std::to_string(img.channels) + "), }";
  // magic(6) + version(2) + header_len(2) + header + '\n' is padded to 64 bytes.
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');

  std::string out(kNpyMagic, 6);
  out.push_back('\x01');
  out.push_back('\x00');
  const auto len = static_cast<std::uint16_t>(header.size());
  out.push_back(static_cast<char>(len & 0xff));
  out.push_back(static_cast<char>(len >> 8));
  out += header;
  const std::size_t off = out.size();
  out.resize(off + img.data.size() * 4);
  std::memcpy(out.data() + off, img.data.data(), img.data.size() * 4);
  return out;
}

Image decode_image_npy(const std::string& bytes) {
  if (bytes.size() < 10 || bytes.compare(0, 6, kNpyMagic, 6) != 0)
    throw std::runtime_error("not an NPY file");
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0, data_off = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
    data_off = 10 + header_len;
  } else if (major == 2 || major == 3) {
    std::uint32_t l = 0;
    std::memcpy(&l, bytes.data() + 8, 4);
    header_len = l;
    data_off = 12 + header_len;
  } else {
    throw std::runtime_error("unsupported NPY version");
  }
  if (bytes.size() < data_off) throw std::runtime_error("truncated NPY header");
  const std::string header = bytes.substr(data_off - header_len, header_len);

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([^']+)')")))
    throw std::runtime_error("NPY header without descr");
  const std::string descr = m[1];
  if (std::regex_search(header, std::regex(R"('fortran_order'\s*:\s*True)")))
    throw std::runtime_error("fortran-ordered NPY arrays are not supported");
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))")))
    throw std::runtime_error("NPY header without shape");
  std::vector<int> dims;
  std::stringstream shape(m[1].str());
  std::string item;
  while (std::getline(shape, item, ','))
    if (item.find_first_not_of(" ") != std::string::npos) dims.push_back(std::stoi(item));
  if (dims.size() == 2) dims.push_back(1);
  if (dims.size() != 3) throw std::runtime_error("image arrays must have shape (H, W) or (H, W, C)");

  Image img(dims[0], dims[1], dims[2]);
  const std::size_t n = img.data.size();
  const char* p = bytes.data() + data_off;
  const std::size_t avail = bytes.size() - data_off;
  if (descr == "<f4") {
    if (avail < n * 4) throw std::runtime_error("truncated NPY data");
    std::memcpy(img.data.data(), p, n * 4);
  } else if (descr == "<f8") {
    if (avail < n * 8) throw std::runtime_error("truncated NPY data");
    for (std::size_t i = 0; i < n; ++i) {
      double v;
      std::memcpy(&v, p + i * 8, 8);
      img.data[i] = static_cast<float>(v);
    }
  } else if (descr == "|u1" || descr == "<u1") {
    if (avail < n) throw std::runtime_error("truncated NPY data");
    for (std::size_t i = 0; i < n; ++i) img.data[i] = static_cast<unsigned char>(p[i]) / 255.0f;
  } else {
    throw std::runtime_error("unsupported NPY dtype " + descr);
  }
  return img;
}

void write_image(const std::string& path, const Image& img) { write_file(path, encode_image_npy(img)); }
Image read_image(const std::string& path) { return decode_image_npy(read_file(path)); }

std::string encode_masks(const MaskBundle& masks) {
  validate_mask_bundle(masks);
  std::string out = kMaskMagic;
  for (OrganId o : kAllOrgans) {
    const MaskStack& s = masks[o];
    out += std::string(organ_name(o)) + " " + std::to_string(s.channels) + " " + std::to_string(s.height) + " " +
           std::to_string(s.width) + "\n";
  }
  out += "\n";
  for (OrganId o : kAllOrgans)
    for (std::uint8_t v : masks[o].data) out.push_back(v ? '\x01' : '\x00');
  return out;
}

MaskBundle decode_masks(const std::string& bytes) {
  const std::size_t magic_len = std::strlen(kMaskMagic);
  if (bytes.compare(0, magic_len, kMaskMagic) != 0) throw std::runtime_error("not a mask container");
  std::size_t pos = magic_len;
  MaskBundle bundle;
  std::vector<OrganId> order;
  OrganArray<bool> seen{};
  while (true) {
    const std::size_t eol = bytes.find('\n', pos);
    if (eol == std::string::npos) throw std::runtime_error("truncated mask header");
    const std::string line = bytes.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) break;
    std::istringstream ls(line);
    std::string name;
    int c = 0, h = 0, w = 0;
    if (!(ls >> name >> c >> h >> w)) throw std::runtime_error("bad mask header line: " + line);
    const auto organ = parse_organ(name);
    if (!organ) throw std::runtime_error("unknown organ in mask container: " + name);
    if (seen[index_of(*organ)]) throw std::runtime_error("duplicate organ in mask container: " + name);
    seen[index_of(*organ)] = true;
    bundle[*organ] = MaskStack(c, h, w);
    order.push_back(*organ);
  }
  for (OrganId o : order) {
    MaskStack& s = bundle[o];
    if (bytes.size() < pos + s.data.size()) throw std::runtime_error("truncated mask data");
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = bytes[pos + i] ? 1 : 0;
    pos += s.data.size();
  }
  // Absent organs become zero stacks of the common size.
  int h = 0, w = 0;
  if (!order.empty()) {
    h = bundle[order.front()].height;
    w = bundle[order.front()].width;
  }
  for (OrganId o : kAllOrgans)
    if (!seen[index_of(o)]) {
      bundle[o] = MaskStack(mask_channels(o), h, w);
      bundle.missing = true;
    }
  validate_mask_bundle(bundle);
  return bundle;
}

void write_masks(const std::string& path, const MaskBundle& masks) { write_file(path, encode_masks(masks)); }
MaskBundle read_masks(const std::string& path) { return decode_masks(read_file(path)); }

}  // namespace orid::io
