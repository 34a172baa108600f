#pragma once

#include "crayon/eval.hpp"
#include "crayon/image.hpp"

#include <zlib.h>

#include <filesystem>
#include <string>

namespace crayon {

// --- gzip ---------------------------------------------------------------------------

/// Gzip container with a zeroed header timestamp, so output is reproducible.
inline std::string gzip_compress(const std::string& in) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error(ErrorCode::io, "deflateInit2 failed");
  std::string out(deflateBound(&zs, static_cast<uLong>(in.size())) + 32, '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorCode::io, "gzip compression failed");
  return out;
}

inline std::string gzip_decompress(const std::string& in) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw Error(ErrorCode::io, "inflateInit2 failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  std::string out;
  char buf[1 << 16];
  int rc = Z_OK;
  do {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw Error(ErrorCode::io, "corrupt gzip data");
    }
    out.append(buf, sizeof buf - zs.avail_out);
  } while (rc != Z_STREAM_END && zs.avail_in > 0);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorCode::io, "truncated gzip data");
  return out;
}

// --- dataset on disk ------------------------------------------------------------------

namespace fs = std::filesystem;

inline constexpr const char* kDatasetFile = "dataset.json";
inline constexpr const char* kRasterDir = "raster";

/// Renders every record, writes gzipped rasters and dataset.json under `dir`,
/// and fills in the file references and hashes of `d`.
inline void save_dataset(Dataset& d, const fs::path& dir, const ExperimentConfig& cfg) {
  fs::create_directories(dir / kRasterDir);
  for (auto& r : d.records) {
    const RenderResult f = render(materialize(r.scene), r.intrinsics, r.extrinsics);
    const std::string rgb = encode_ppm(f.rgb);
    const std::string depth = encode_depth(f.depth);
    r.rgb_file = std::string(kRasterDir) + "/" + r.id + ".rgb.ppm.gz";
    r.depth_file = std::string(kRasterDir) + "/" + r.id + ".depth.gz";
    r.rgb_hash = hex64(fnv1a(rgb));
    r.depth_hash = hex64(fnv1a(depth));
    write_file((dir / r.rgb_file).string(), gzip_compress(rgb));
    write_file((dir / r.depth_file).string(), gzip_compress(depth));
  }
  Json j = d.to_json();
  j["config"] = cfg.to_json();
  j["config_fingerprint"] = cfg.fingerprint();
  write_file((dir / kDatasetFile).string(), j.dump(1) + "\n");
}

struct LoadedDataset {
  Dataset dataset;
  ExperimentConfig config;
};

inline RgbImage load_record_rgb(const DatasetRecord& r, const fs::path& dir) {
  const std::string bytes = gzip_decompress(read_file((dir / r.rgb_file).string()));
  if (hex64(fnv1a(bytes)) != r.rgb_hash) throw Error(ErrorCode::hash_mismatch, r.rgb_file + " does not match its hash");
  return decode_ppm(bytes);
}

inline DepthImage load_record_depth(const DatasetRecord& r, const fs::path& dir) {
  const std::string bytes = gzip_decompress(read_file((dir / r.depth_file).string()));
  if (hex64(fnv1a(bytes)) != r.depth_hash)
    throw Error(ErrorCode::hash_mismatch, r.depth_file + " does not match its hash");
  return decode_depth(bytes);
}

/// Loads dataset.json and, when `verify_files`, checks every raster exists and
/// matches its recorded hash.
inline LoadedDataset load_dataset(const fs::path& dir, bool verify_files = true) {
  Json j;
  try {
    j = Json::parse(read_file((dir / kDatasetFile).string()));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::io, std::string("unreadable dataset.json: ") + e.what());
  }
  LoadedDataset out;
  out.dataset = Dataset::from_json(j);
  out.config = ExperimentConfig::from_json(detail::field(j, "config"));
  if (detail::field(j, "config_fingerprint").get<std::string>() != out.config.fingerprint())
    throw Error(ErrorCode::hash_mismatch, "dataset config fingerprint does not match its config");
  if (verify_files)
    for (const auto& r : out.dataset.records) {
      load_record_rgb(r, dir);
      load_record_depth(r, dir);
    }
  return out;
}

/// Writes a report as pretty JSON with a trailing newline.
inline void save_report(const MetricsReport& r, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path.string(), r.to_json().dump(1) + "\n");
}

}  // namespace crayon
