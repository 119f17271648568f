#pragma once

#include <string>
#include <vector>

#include "lpref/harness/binio.hpp"
#include "lpref/harness/synthetic.hpp"

namespace lpref {

// Dataset files:
//   "LPDS" | version u32 | dtype u8 (0 = f64) | record count u64
//   | latent ndim u64 + dims | score dims u64 | fixed-width records
// score dims 0: latent records { cond u32, latent f64[] } for pretraining.
// score dims 3: pair records { cond u32, win f64[], lose f64[],
//                              aes_w, aes_l, clip_w, clip_l, vqa_w, vqa_l }.
// A plain-text sidecar (<path>.schema.txt) documents the layout.

inline constexpr std::uint32_t kDatasetVersion = 1;

namespace detail {

inline void write_dataset_header(std::vector<unsigned char>& buf, std::uint64_t count,
                                 const std::vector<std::size_t>& latent_dims, std::uint64_t score_dims) {
  binio::put_bytes(buf, "LPDS", 4);
  binio::put_u32(buf, kDatasetVersion);
  binio::put_u8(buf, 0);  // f64
  binio::put_u64(buf, count);
  binio::put_u64(buf, latent_dims.size());
  for (std::size_t d : latent_dims) binio::put_u64(buf, d);
  binio::put_u64(buf, score_dims);
}

struct DatasetHeader {
  std::uint64_t count = 0;
  std::vector<std::size_t> latent_dims;
  std::uint64_t score_dims = 0;
};

inline DatasetHeader read_dataset_header(binio::Reader& r, const std::string& path) {
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != "LPDS") throw IoError("not a dataset file: " + path);
  std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw IoError("dataset version " + std::to_string(version) + " unsupported: " + path);
  }
  if (r.u8() != 0) throw IoError("dataset dtype tag unsupported: " + path);
  DatasetHeader h;
  h.count = r.u64();
  std::uint64_t ndim = r.u64();
  h.latent_dims.resize(ndim);
  for (auto& d : h.latent_dims) d = r.u64();
  h.score_dims = r.u64();
  return h;
}

inline void write_sidecar_schema(const std::string& path, const DatasetHeader& h) {
  std::ostringstream os;
  os << "LPDS dataset schema\n"
     << "magic: LPDS, version: " << kDatasetVersion << ", dtype: f64 little-endian\n"
     << "records: " << h.count << "\n"
     << "latent dims:";
  for (std::size_t d : h.latent_dims) os << " " << d;
  os << "\nscore dims: " << h.score_dims << "\n";
  if (h.score_dims == 0) {
    os << "record layout: cond_id u32, latent f64[n]\n";
  } else {
    os << "record layout: cond_id u32, win f64[n], lose f64[n], "
          "scores f64[2*score_dims] as (aes_w, aes_l, clip_w, clip_l, vqa_w, vqa_l)\n";
  }
  std::vector<unsigned char> buf;
  std::string text = os.str();
  binio::put_bytes(buf, text.data(), text.size());
  binio::write_file(path, buf);
}

inline void refuse_existing(const std::string& path) {
  if (binio::file_exists(path)) throw IoError("refusing to overwrite existing file: " + path);
}

}  // namespace detail

inline void save_latents(const std::string& path, const std::vector<LatentItem>& items) {
  if (items.empty()) throw InvalidArgument("save_latents: empty dataset");
  detail::refuse_existing(path);
  std::vector<unsigned char> buf;
  detail::write_dataset_header(buf, items.size(), items.front().x0.shape(), 0);
  for (const LatentItem& item : items) {
    binio::put_u32(buf, static_cast<std::uint32_t>(item.cond_id));
    for (double v : item.x0.values()) binio::put_f64(buf, v);
  }
  binio::write_file(path, buf);
  detail::write_sidecar_schema(path + ".schema.txt",
                               {items.size(), items.front().x0.shape(), 0});
}

inline std::vector<LatentItem> load_latents(const std::string& path) {
  std::vector<unsigned char> buf = binio::read_file(path);
  binio::Reader r(buf.data(), buf.size());
  detail::DatasetHeader h = detail::read_dataset_header(r, path);
  if (h.score_dims != 0) throw IoError("expected a latent dataset (score dims 0): " + path);
  Tensor proto(h.latent_dims);
  std::vector<LatentItem> items;
  items.reserve(h.count);
  for (std::uint64_t i = 0; i < h.count; ++i) {
    LatentItem item;
    item.cond_id = static_cast<int>(r.u32());
    item.x0 = proto;
    for (auto& v : item.x0.values()) v = r.f64();
    items.push_back(std::move(item));
  }
  if (r.remaining() != 0) throw IoError("trailing bytes in dataset: " + path);
  return items;
}

inline void save_pairs(const std::string& path, const std::vector<ScoredPair>& records) {
  if (records.empty()) throw InvalidArgument("save_pairs: empty dataset");
  detail::refuse_existing(path);
  std::vector<unsigned char> buf;
  detail::write_dataset_header(buf, records.size(), records.front().pair.x0_win.shape(), 3);
  for (const ScoredPair& sp : records) {
    binio::put_u32(buf, static_cast<std::uint32_t>(sp.pair.cond.id));
    for (double v : sp.pair.x0_win.values()) binio::put_f64(buf, v);
    for (double v : sp.pair.x0_lose.values()) binio::put_f64(buf, v);
    for (double v : {sp.aes_win, sp.aes_lose, sp.clip_win, sp.clip_lose, sp.vqa_win, sp.vqa_lose}) {
      binio::put_f64(buf, v);
    }
  }
  binio::write_file(path, buf);
  detail::write_sidecar_schema(path + ".schema.txt",
                               {records.size(), records.front().pair.x0_win.shape(), 3});
}

inline std::vector<ScoredPair> load_pairs(const std::string& path) {
  std::vector<unsigned char> buf = binio::read_file(path);
  binio::Reader r(buf.data(), buf.size());
  detail::DatasetHeader h = detail::read_dataset_header(r, path);
  if (h.score_dims != 3) throw IoError("expected a scored-pair dataset (score dims 3): " + path);
  Tensor proto(h.latent_dims);
  std::vector<ScoredPair> records;
  records.reserve(h.count);
  for (std::uint64_t i = 0; i < h.count; ++i) {
    ScoredPair sp;
    sp.pair.cond = Condition{static_cast<int>(r.u32()), Tensor()};
    sp.pair.x0_win = proto;
    for (auto& v : sp.pair.x0_win.values()) v = r.f64();
    sp.pair.x0_lose = proto;
    for (auto& v : sp.pair.x0_lose.values()) v = r.f64();
    sp.aes_win = r.f64();
    sp.aes_lose = r.f64();
    sp.clip_win = r.f64();
    sp.clip_lose = r.f64();
    sp.vqa_win = r.f64();
    sp.vqa_lose = r.f64();
    records.push_back(std::move(sp));
  }
  if (r.remaining() != 0) throw IoError("trailing bytes in dataset: " + path);
  return records;
}

}  // namespace lpref
