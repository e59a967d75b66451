#include "fetqc/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>

#include "fetqc/error.hpp"

namespace fetqc {
namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

enum Datatype : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUint16 = 512,
};

// Byte offsets into the 348-byte header.
namespace off {
constexpr int sizeof_hdr = 0;
constexpr int dim = 40;
constexpr int datatype = 70;
constexpr int bitpix = 72;
constexpr int pixdim = 76;
constexpr int vox_offset = 108;
constexpr int scl_slope = 112;
constexpr int scl_inter = 116;
constexpr int xyzt_units = 123;
constexpr int descrip = 148;
constexpr int qform_code = 252;
constexpr int sform_code = 254;
constexpr int quatern_b = 256;
constexpr int qoffset_x = 268;
constexpr int srow_x = 280;
constexpr int magic = 344;
}  // namespace off

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string read_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string out;
  char buf[1 << 16];
  int n = 0;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw Error(ErrorCode::MalformedHeader, "corrupt gzip stream in " + path.string());
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const bool gz = ends_with(path.string(), ".gz");
  gzFile f = gzopen(path.string().c_str(), gz ? "wb6" : "wbT");
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  const int written = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(f);
  if (written != static_cast<int>(bytes.size())) throw Error(ErrorCode::Io, "short write " + path.string());
}

class HeaderView {
 public:
  HeaderView(const char* bytes, bool swap) : p_(bytes), swap_(swap) {}

  template <typename T>
  T get(int offset) const {
    T v;
    std::memcpy(&v, p_ + offset, sizeof(T));
    if (swap_) v = byteswap(v);
    return v;
  }

  template <typename T>
  static T byteswap(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
    return v;
  }

 private:
  const char* p_;
  bool swap_;
};

template <typename T>
void put(std::string& h, int offset, T v) {
  std::memcpy(h.data() + offset, &v, sizeof(T));
}

template <typename T>
void decode(const char* src, std::size_t n, bool swap, double slope, double inter,
            std::vector<float>& out) {
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, src + i * sizeof(T), sizeof(T));
    if (swap) v = HeaderView::byteswap(v);
    out[i] = static_cast<float>(static_cast<double>(v) * slope + inter);
  }
}

Affine quaternion_affine(const HeaderView& h, const Spacing& spacing, float qfac_raw) {
  const double b = h.get<float>(off::quatern_b);
  const double c = h.get<float>(off::quatern_b + 4);
  const double d = h.get<float>(off::quatern_b + 8);
  double a = 1.0 - (b * b + c * c + d * d);
  a = a < 1e-7 ? 0.0 : std::sqrt(a);
  const double qfac = qfac_raw < 0 ? -1.0 : 1.0;
  const double r[3][3] = {
      {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
      {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
      {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b}};
  Affine m = identity_affine();
  const double scale[3] = {spacing[0], spacing[1], spacing[2] * qfac};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m[i][j] = r[i][j] * scale[j];
    m[i][3] = h.get<float>(off::qoffset_x + 4 * i);
  }
  return m;
}

Volume read_raw(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < kHeaderSize) throw Error(ErrorCode::MalformedHeader, "file shorter than header");

  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr != kHeaderSize) {
    if (HeaderView::byteswap(sizeof_hdr) == kHeaderSize) {
      swap = true;
    } else {
      throw Error(ErrorCode::MalformedHeader, "sizeof_hdr != 348 in " + path.string());
    }
  }
  const HeaderView h(bytes.data(), swap);
  const std::string magic(bytes.data() + off::magic, 3);
  if (magic != "n+1" && magic != "ni1") {
    throw Error(ErrorCode::MalformedHeader, "bad magic in " + path.string());
  }

  const auto ndim = h.get<std::int16_t>(off::dim);
  if (ndim < 1 || ndim > 7) throw Error(ErrorCode::MalformedHeader, "dim[0] out of range");
  std::array<std::size_t, 3> n{1, 1, 1};
  for (int i = 1; i <= ndim; ++i) {
    const auto d = h.get<std::int16_t>(off::dim + 2 * i);
    if (d < 1) throw Error(ErrorCode::MalformedHeader, "non-positive dim");
    if (i <= 3) {
      n[static_cast<std::size_t>(i - 1)] = static_cast<std::size_t>(d);
    } else if (d != 1) {
      throw Error(ErrorCode::DimensionError, "not a 3D image: dim[" + std::to_string(i) + "]=" + std::to_string(d));
    }
  }

  const auto datatype = h.get<std::int16_t>(off::datatype);
  std::size_t width = 0;
  switch (datatype) {
    case kUint8: case kInt8: width = 1; break;
    case kInt16: case kUint16: width = 2; break;
    case kInt32: case kFloat32: width = 4; break;
    case kFloat64: width = 8; break;
    default:
      throw Error(ErrorCode::UnsupportedDatatype, "datatype " + std::to_string(datatype));
  }

  Spacing spacing{};
  for (int i = 0; i < 3; ++i) {
    spacing[static_cast<std::size_t>(i)] = std::fabs(h.get<float>(off::pixdim + 4 * (i + 1)));
    if (!(spacing[static_cast<std::size_t>(i)] > 0) || !std::isfinite(spacing[static_cast<std::size_t>(i)])) {
      if (i < ndim) throw Error(ErrorCode::MalformedHeader, "non-positive pixdim");
      spacing[static_cast<std::size_t>(i)] = 1.0;
    }
  }

  double slope = h.get<float>(off::scl_slope);
  double inter = h.get<float>(off::scl_inter);
  if (slope == 0.0 || !std::isfinite(slope)) {
    slope = 1.0;
    inter = 0.0;
  }
  if (!std::isfinite(inter)) inter = 0.0;

  std::string img_bytes;
  const char* payload = nullptr;
  const Dims dims{n[0], n[1], n[2]};
  const std::size_t count = dims.count();
  if (magic == "n+1") {
    const auto vox_offset = static_cast<std::size_t>(h.get<float>(off::vox_offset));
    if (vox_offset < kHeaderSize || bytes.size() < vox_offset + count * width) {
      throw Error(ErrorCode::MalformedHeader, "truncated image data in " + path.string());
    }
    payload = bytes.data() + vox_offset;
  } else {
    auto img = path;
    std::string s = img.string();
    if (ends_with(s, ".hdr.gz")) s = s.substr(0, s.size() - 7) + ".img.gz";
    else if (ends_with(s, ".hdr")) s = s.substr(0, s.size() - 4) + ".img";
    img_bytes = read_file(s);
    const auto vox_offset = static_cast<std::size_t>(h.get<float>(off::vox_offset));
    if (img_bytes.size() < vox_offset + count * width) throw Error(ErrorCode::MalformedHeader, "truncated .img");
    payload = img_bytes.data() + vox_offset;
  }

  Volume vol;
  std::vector<float> data;
  switch (datatype) {
    case kUint8: decode<std::uint8_t>(payload, count, swap, slope, inter, data); break;
    case kInt8: decode<std::int8_t>(payload, count, swap, slope, inter, data); break;
    case kInt16: decode<std::int16_t>(payload, count, swap, slope, inter, data); break;
    case kUint16: decode<std::uint16_t>(payload, count, swap, slope, inter, data); break;
    case kInt32: decode<std::int32_t>(payload, count, swap, slope, inter, data); break;
    case kFloat32: decode<float>(payload, count, swap, slope, inter, data); break;
    case kFloat64: decode<double>(payload, count, swap, slope, inter, data); break;
    default: break;
  }
  for (auto& v : data) {
    if (!std::isfinite(v)) {
      v = 0.0f;
      ++vol.nonfinite_count;
    }
  }
  vol.grid = Grid3<float>(dims, std::move(data));
  vol.spacing = spacing;

  const auto sform_code = h.get<std::int16_t>(off::sform_code);
  const auto qform_code = h.get<std::int16_t>(off::qform_code);
  if (sform_code > 0) {
    Affine a = identity_affine();
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 4; ++j) a[i][j] = h.get<float>(off::srow_x + 16 * i + 4 * j);
    }
    vol.affine = a;
  } else if (qform_code > 0) {
    vol.affine = quaternion_affine(h, spacing, h.get<float>(off::pixdim));
  } else {
    vol.affine = diagonal_affine(spacing);
  }
  return vol;
}

void check_min_dims(const Dims& d, const std::filesystem::path& path) {
  if (d.x < kMinIngestDims.x || d.y < kMinIngestDims.y || d.z < kMinIngestDims.z) {
    throw Error(ErrorCode::DimensionError,
                "grid " + std::to_string(d.x) + "x" + std::to_string(d.y) + "x" + std::to_string(d.z) +
                    " below minimum 8x8x3 in " + path.string());
  }
}

std::string encode(const Volume& like, std::int16_t datatype, std::int16_t bitpix, const std::string& payload) {
  std::string h(kVoxOffset, '\0');
  put<std::int32_t>(h, off::sizeof_hdr, kHeaderSize);
  const auto& d = like.dims();
  put<std::int16_t>(h, off::dim, 3);
  put<std::int16_t>(h, off::dim + 2, static_cast<std::int16_t>(d.x));
  put<std::int16_t>(h, off::dim + 4, static_cast<std::int16_t>(d.y));
  put<std::int16_t>(h, off::dim + 6, static_cast<std::int16_t>(d.z));
  for (int i = 4; i < 8; ++i) put<std::int16_t>(h, off::dim + 2 * i, 1);
  put<std::int16_t>(h, off::datatype, datatype);
  put<std::int16_t>(h, off::bitpix, bitpix);
  put<float>(h, off::pixdim, 1.0f);
  for (int i = 0; i < 3; ++i) put<float>(h, off::pixdim + 4 * (i + 1), static_cast<float>(like.spacing[static_cast<std::size_t>(i)]));
  put<float>(h, off::vox_offset, static_cast<float>(kVoxOffset));
  put<float>(h, off::scl_slope, 1.0f);
  put<float>(h, off::scl_inter, 0.0f);
  h[off::xyzt_units] = 2;  // mm
  const char descrip[] = "fetqc";
  std::memcpy(h.data() + off::descrip, descrip, sizeof descrip);
  put<std::int16_t>(h, off::qform_code, 0);
  put<std::int16_t>(h, off::sform_code, 2);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      put<float>(h, off::srow_x + 16 * i + 4 * j, static_cast<float>(like.affine[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
    }
  }
  std::memcpy(h.data() + off::magic, "n+1\0", 4);
  return h + payload;
}

template <typename Out, typename In>
std::string pack(const std::vector<In>& values) {
  std::string s(values.size() * sizeof(Out), '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Out v = static_cast<Out>(values[i]);
    std::memcpy(s.data() + i * sizeof(Out), &v, sizeof(Out));
  }
  return s;
}

struct Reorientation {
  std::array<int, 3> order{0, 1, 2};  // new axis k takes old axis order[k]
  std::array<bool, 3> flip{false, false, false};
  bool identity() const {
    return order == std::array<int, 3>{0, 1, 2} && !flip[0] && !flip[1] && !flip[2];
  }
};

Reorientation plan_reorientation(const Volume& vol) {
  const auto& m = vol.affine;
  // world axis assigned to each voxel axis: best of the 6 permutations
  std::array<int, 3> perm{0, 1, 2};
  std::array<int, 3> best = perm;
  double best_score = -1.0;
  do {
    double score = 0.0;
    for (int j = 0; j < 3; ++j) {
      double norm = 0.0;
      for (int i = 0; i < 3; ++i) norm += m[i][j] * m[i][j];
      norm = std::sqrt(norm);
      score += norm > 0 ? std::fabs(m[perm[j]][j]) / norm : 0.0;
    }
    if (score > best_score + 1e-12) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  Reorientation r;
  // through-plane: largest spacing, ties broken toward the higher world axis
  int through = 0;
  for (int j = 1; j < 3; ++j) {
    const double sj = vol.spacing[static_cast<std::size_t>(j)];
    const double st = vol.spacing[static_cast<std::size_t>(through)];
    if (sj > st || (sj == st && best[j] > best[through])) through = j;
  }
  std::array<int, 2> inplane{};
  int k = 0;
  for (int j = 0; j < 3; ++j) if (j != through) inplane[static_cast<std::size_t>(k++)] = j;
  if (best[inplane[0]] > best[inplane[1]]) std::swap(inplane[0], inplane[1]);
  r.order = {inplane[0], inplane[1], through};
  for (int a = 0; a < 3; ++a) {
    const int old = r.order[static_cast<std::size_t>(a)];
    r.flip[static_cast<std::size_t>(a)] = m[best[old]][old] < 0;
  }
  return r;
}

}  // namespace

Volume canonicalize(const Volume& vol) {
  const Reorientation r = plan_reorientation(vol);
  if (r.identity()) return vol;

  const auto& od = vol.dims();
  const std::array<std::size_t, 3> old_n{od.x, od.y, od.z};
  const Dims nd{old_n[static_cast<std::size_t>(r.order[0])], old_n[static_cast<std::size_t>(r.order[1])],
                old_n[static_cast<std::size_t>(r.order[2])]};
  std::array<std::size_t, 3> old_stride{1, od.x, od.x * od.y};

  Volume out;
  out.nonfinite_count = vol.nonfinite_count;
  out.grid = Grid3<float>(nd);
  for (std::size_t z = 0; z < nd.z; ++z) {
    for (std::size_t y = 0; y < nd.y; ++y) {
      for (std::size_t x = 0; x < nd.x; ++x) {
        const std::array<std::size_t, 3> v{x, y, z};
        std::size_t src = 0;
        for (std::size_t a = 0; a < 3; ++a) {
          const auto oa = static_cast<std::size_t>(r.order[a]);
          const std::size_t idx = r.flip[a] ? old_n[oa] - 1 - v[a] : v[a];
          src += idx * old_stride[oa];
        }
        out.grid(x, y, z) = vol.grid[src];
      }
    }
  }

  out.affine = identity_affine();
  for (int i = 0; i < 3; ++i) out.affine[static_cast<std::size_t>(i)][3] = vol.affine[static_cast<std::size_t>(i)][3];
  for (std::size_t a = 0; a < 3; ++a) {
    const auto oa = static_cast<std::size_t>(r.order[a]);
    out.spacing[a] = vol.spacing[oa];
    const double sign = r.flip[a] ? -1.0 : 1.0;
    for (std::size_t i = 0; i < 3; ++i) {
      out.affine[i][a] = sign * vol.affine[i][oa];
      if (r.flip[a]) out.affine[i][3] += vol.affine[i][oa] * static_cast<double>(old_n[oa] - 1);
    }
  }
  return out;
}

Volume read_nifti(const std::filesystem::path& path) {
  Volume vol = canonicalize(read_raw(path));
  check_min_dims(vol.dims(), path);
  return vol;
}

Mask read_mask(const std::filesystem::path& path) {
  const Volume vol = read_nifti(path);
  Mask mask{Grid3<std::uint8_t>(vol.dims())};
  for (std::size_t i = 0; i < vol.grid.size(); ++i) mask.grid[i] = vol.grid[i] > 0.0f ? 1 : 0;
  return mask;
}

LabelMap read_labelmap(const std::filesystem::path& path) {
  const Volume vol = read_nifti(path);
  LabelMap labels{Grid3<std::int32_t>(vol.dims())};
  for (std::size_t i = 0; i < vol.grid.size(); ++i) {
    labels.grid[i] = static_cast<std::int32_t>(std::lround(vol.grid[i]));
  }
  return labels;
}

void write_nifti(const std::filesystem::path& path, const Volume& vol) {
  write_file(path, encode(vol, kFloat32, 32, pack<float>(vol.grid.data())));
}

void write_nifti(const std::filesystem::path& path, const Mask& mask, const Volume& like) {
  if (!(mask.dims() == like.dims())) throw Error(ErrorCode::DimensionError, "mask/volume grid mismatch");
  write_file(path, encode(like, kUint8, 8, pack<std::uint8_t>(mask.grid.data())));
}

void write_nifti(const std::filesystem::path& path, const LabelMap& labels, const Volume& like) {
  if (!(labels.dims() == like.dims())) throw Error(ErrorCode::DimensionError, "labelmap/volume grid mismatch");
  write_file(path, encode(like, kInt16, 16, pack<std::int16_t>(labels.grid.data())));
}

}  // namespace fetqc
