#include "ttp/checkpoint.hpp"

#include "binary_io.hpp"

#include <limits>
#include <string>

namespace ttp {

std::vector<std::uint8_t> encode_checkpoint(const MetaParams& meta) {
  validate(meta);
  const ModelDims dims = dims_of(meta);
  detail::ByteWriter w;
  w.raw("TTPM");
  w.u32(kCheckpointVersion);
  for (auto v : {dims.encoder_dim, dims.fused_dim, dims.proj_dim, dims.head_dim}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  for (const Mat* m : tensors(meta)) {
    w.u32(static_cast<std::uint32_t>(m->rows()));
    w.u32(static_cast<std::uint32_t>(m->cols()));
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) w.f64((*m)(r, c));
    }
  }
  return w.bytes();
}

MetaParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.remaining() < 4 || r.str(4, "magic") != "TTPM") {
    throw DataError(DataErrorCode::BadMagic, "not a TTPM checkpoint");
  }
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw DataError(DataErrorCode::UnsupportedVersion,
                    "checkpoint version " + std::to_string(version));
  }
  std::uint32_t header[4];
  for (auto& v : header) v = r.u32("dims");
  MetaParams meta;
  for (Mat* m : tensors(meta)) {
    const auto rows = r.u32("tensor shape");
    const auto cols = r.u32("tensor shape");
    const std::size_t count = static_cast<std::size_t>(rows) * cols;
    if (count > r.remaining() / 8) {
      throw DataError(DataErrorCode::Truncated, "tensor payload exceeds file size");
    }
    m->resize(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) (*m)(i, j) = r.f64("tensor payload");
    }
  }
  if (r.remaining() != 0) throw DataError(DataErrorCode::TrailingData, "bytes after last tensor");
  for (const Mat* m : tensors(meta)) {
    if (!m->allFinite()) throw DataError(DataErrorCode::InvalidValue, "non-finite tensor entry");
  }
  try {
    validate(meta);
  } catch (const std::invalid_argument& e) {
    throw DataError(DataErrorCode::DimensionMismatch, e.what());
  }
  const ModelDims dims = dims_of(meta);
  if (header[0] != dims.encoder_dim || header[1] != dims.fused_dim || header[2] != dims.proj_dim ||
      header[3] != dims.head_dim) {
    throw DataError(DataErrorCode::DimensionMismatch, "header dims disagree with tensor shapes");
  }
  return meta;
}

void save_checkpoint(const std::filesystem::path& path, const MetaParams& meta) {
  detail::write_file_bytes(path, encode_checkpoint(meta));
}

MetaParams load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return decode_checkpoint(bytes);
}

}  // namespace ttp
