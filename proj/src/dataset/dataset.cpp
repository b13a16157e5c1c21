#include "chainnet/dataset/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "../common/le_io.hpp"
#include "chainnet/errors.hpp"
#include "chainnet/seed.hpp"

namespace chainnet::dataset {
namespace {

constexpr std::array<char, 4> kMagic{'C', 'N', 'D', 'S'};
constexpr const char* kWhat = "dataset";

void append_u32(std::vector<char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t fnv1a(std::uint64_t h, const char* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(p[i]);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

DatasetManifest DatasetManifest::full_grid() {
  DatasetManifest m;
  m.schemes.assign(modem::all_schemes().begin(), modem::all_schemes().end());
  for (int s = -20; s <= 20; s += 2) m.snrs_db.push_back(static_cast<std::int8_t>(s));
  m.frames_per_cell = 4000;
  return m;
}

void DatasetManifest::validate() const {
  if (version != kFormatVersion)
    throw ConfigError("dataset: unsupported format version " + std::to_string(version));
  if (frame_len == 0) throw ConfigError("dataset: frame_len must be >= 1");
  if (schemes.empty()) throw ConfigError("dataset: scheme list is empty");
  for (std::size_t i = 0; i < schemes.size(); ++i) {
    if (static_cast<std::size_t>(schemes[i]) >= modem::kSchemeCount)
      throw ConfigError("dataset: unknown scheme label " + std::to_string(static_cast<int>(schemes[i])));
    for (std::size_t j = 0; j < i; ++j)
      if (schemes[j] == schemes[i])
        throw ConfigError("dataset: scheme " + std::string(modem::scheme_name(schemes[i])) + " listed twice");
  }
  if (snrs_db.empty()) throw ConfigError("dataset: SNR list is empty");
  for (std::int8_t s : snrs_db)
    if (s != kCleanSnr && (s < -20 || s > 20 || s % 2 != 0))
      throw ConfigError("dataset: SNR " + std::to_string(s) + " dB is off the -20..20 dB step-2 grid");
  if (frames_per_cell == 0) throw ConfigError("dataset: frames_per_cell must be >= 1");
  if (!(max_doppler_hz >= 0.0)) throw ConfigError("dataset: max_doppler_hz must be >= 0");
  if (!(sample_rate_hz > 0.0)) throw ConfigError("dataset: sample_rate_hz must be positive");
}

std::uint64_t DatasetManifest::record_count() const {
  return static_cast<std::uint64_t>(schemes.size()) * snrs_db.size() * frames_per_cell;
}

std::size_t DatasetManifest::class_of(std::uint8_t label) const {
  for (std::size_t i = 0; i < schemes.size(); ++i)
    if (modem::label_of(schemes[i]) == label) return i;
  throw ConfigError("dataset: label " + std::to_string(label) + " is not in the manifest");
}

std::size_t DatasetManifest::header_bytes() const {
  std::size_t n = 4 + 2 + 4 + 1;
  for (modem::Scheme s : schemes) n += 2 + modem::scheme_name(s).size();
  n += 1 + snrs_db.size();
  n += 4 + 1 + 8 + 8 + 8 + 8;
  return n;
}

std::uint64_t frame_seed(std::uint64_t master, modem::Scheme s, std::int8_t snr_db, std::uint64_t index) {
  return derive_seed(master, {modem::label_of(s), static_cast<std::uint64_t>(static_cast<std::int64_t>(snr_db)), index});
}

FrameRecord synthesize_record(const DatasetManifest& m, modem::Scheme s, std::int8_t snr_db, std::uint64_t index,
                              const modem::ModemConfig& modem_cfg) {
  const std::uint64_t seed = frame_seed(m.master_seed, s, snr_db, index);
  const channel::ChannelProfile epa = channel::ChannelProfile::epa(m.sample_rate_hz, m.max_doppler_hz);
  const std::size_t guard = m.scenario == channel::Scenario::Epa ? epa.guard_samples() : 0;

  const modem::Signal clean = modem::generate_clean_frame(s, m.frame_len + guard, derive_seed(seed, {0}), modem_cfg);
  modem::Signal faded;
  switch (m.scenario) {
    case channel::Scenario::None: faded = clean; break;
    case channel::Scenario::Flat:
      faded = channel::apply_flat_fading(clean, m.max_doppler_hz, derive_seed(seed, {1}), m.sample_rate_hz);
      break;
    case channel::Scenario::Epa: faded = channel::apply_multipath(clean, epa, derive_seed(seed, {1})); break;
  }
  const std::span<const modem::cplx> frame(faded.data() + guard, m.frame_len);
  const modem::Signal noisy =
      snr_db == kCleanSnr ? modem::Signal(frame.begin(), frame.end())
                          : channel::add_awgn(frame, {static_cast<double>(snr_db), derive_seed(seed, {2})});

  FrameRecord r;
  r.label = modem::label_of(s);
  r.snr_db = snr_db;
  r.iq.resize(2 * static_cast<std::size_t>(m.frame_len));
  for (std::size_t k = 0; k < m.frame_len; ++k) {
    r.iq[2 * k] = static_cast<float>(noisy[k].real());
    r.iq[2 * k + 1] = static_cast<float>(noisy[k].imag());
  }
  return r;
}

void write_manifest(const DatasetManifest& m, std::ostream& out) {
  m.validate();
  out.write(kMagic.data(), kMagic.size());
  le::put<std::uint16_t>(out, m.version);
  le::put<std::uint32_t>(out, m.frame_len);
  le::put<std::uint8_t>(out, static_cast<std::uint8_t>(m.schemes.size()));
  for (modem::Scheme s : m.schemes) {
    const std::string_view name = modem::scheme_name(s);
    le::put<std::uint8_t>(out, modem::label_of(s));
    le::put<std::uint8_t>(out, static_cast<std::uint8_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  le::put<std::uint8_t>(out, static_cast<std::uint8_t>(m.snrs_db.size()));
  for (std::int8_t s : m.snrs_db) le::put<std::uint8_t>(out, static_cast<std::uint8_t>(s));
  le::put<std::uint32_t>(out, m.frames_per_cell);
  le::put<std::uint8_t>(out, static_cast<std::uint8_t>(m.scenario));
  le::put_f64(out, m.max_doppler_hz);
  le::put_f64(out, m.sample_rate_hz);
  le::put<std::uint64_t>(out, m.master_seed);
  le::put<std::uint64_t>(out, m.record_count());
}

DatasetManifest read_manifest(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError("dataset: bad magic (expected CNDS)");
  DatasetManifest m;
  m.version = le::get<std::uint16_t>(in, kWhat);
  if (m.version != kFormatVersion) throw IoError("dataset: unsupported format version " + std::to_string(m.version));
  m.frame_len = le::get<std::uint32_t>(in, kWhat);
  const std::uint8_t n_schemes = le::get<std::uint8_t>(in, kWhat);
  for (std::uint8_t i = 0; i < n_schemes; ++i) {
    const std::uint8_t label = le::get<std::uint8_t>(in, kWhat);
    const std::uint8_t len = le::get<std::uint8_t>(in, kWhat);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw IoError("dataset truncated in scheme table");
    const auto s = modem::parse_scheme(name);
    if (!s || modem::label_of(*s) != label)
      throw IoError("dataset: scheme entry '" + name + "' with label " + std::to_string(label) +
                    " does not match this build's label table");
    m.schemes.push_back(*s);
  }
  const std::uint8_t n_snrs = le::get<std::uint8_t>(in, kWhat);
  for (std::uint8_t i = 0; i < n_snrs; ++i)
    m.snrs_db.push_back(static_cast<std::int8_t>(le::get<std::uint8_t>(in, kWhat)));
  m.frames_per_cell = le::get<std::uint32_t>(in, kWhat);
  const std::uint8_t scen = le::get<std::uint8_t>(in, kWhat);
  if (scen > 2) throw IoError("dataset: unknown channel scenario code " + std::to_string(scen));
  m.scenario = static_cast<channel::Scenario>(scen);
  m.max_doppler_hz = le::get_f64(in, kWhat);
  m.sample_rate_hz = le::get_f64(in, kWhat);
  m.master_seed = le::get<std::uint64_t>(in, kWhat);
  const std::uint64_t count = le::get<std::uint64_t>(in, kWhat);
  m.validate();
  if (count != m.record_count())
    throw IoError("dataset: header declares " + std::to_string(count) + " records, manifest implies " +
                  std::to_string(m.record_count()));
  return m;
}

void write_dataset(const DatasetManifest& m, std::ostream& out, const modem::ModemConfig& modem_cfg,
                   const Progress& progress) {
  write_manifest(m, out);
  const std::uint64_t total = m.record_count();
  std::uint64_t done = 0;
  std::vector<char> buf;
  buf.reserve(m.record_bytes());
  for (modem::Scheme s : m.schemes)
    for (std::int8_t snr : m.snrs_db)
      for (std::uint32_t i = 0; i < m.frames_per_cell; ++i) {
        const FrameRecord r = synthesize_record(m, s, snr, i, modem_cfg);
        buf.clear();
        buf.push_back(static_cast<char>(r.label));
        buf.push_back(static_cast<char>(r.snr_db));
        for (float v : r.iq) {
          std::uint32_t bits;
          std::memcpy(&bits, &v, 4);
          append_u32(buf, bits);
        }
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw IoError("dataset: write failed after " + std::to_string(done) + " records");
        ++done;
        if (progress) progress(done, total);
      }
  le::put<std::uint64_t>(out, done);
  if (!out) throw IoError("dataset: failed writing record-count footer");
}

void generate_dataset(const DatasetManifest& m, const std::filesystem::path& path,
                      const modem::ModemConfig& modem_cfg, const Progress& progress) {
  m.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_dataset(m, out, modem_cfg, progress);
  out.close();
  if (!out) throw IoError("failed closing " + path.string());
}

Dataset::Dataset(DatasetManifest m, std::vector<FrameRecord> records)
    : manifest_(std::move(m)), records_(std::move(records)) {}

DatasetManifest read_dataset_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  try {
    return read_manifest(in);
  } catch (const Error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  DatasetManifest m;
  try {
    m = read_manifest(in);
  } catch (const Error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  std::error_code ec;
  const std::uint64_t size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string());
  if (size != m.file_bytes())
    throw IoError(path.string() + ": file is " + std::to_string(size) + " bytes, manifest implies " +
                  std::to_string(m.file_bytes()) + " (truncated or partial write)");

  const std::uint64_t count = m.record_count();
  std::vector<FrameRecord> records(count);
  std::vector<char> buf(m.record_bytes());
  for (std::uint64_t i = 0; i < count; ++i) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!in) throw IoError(path.string() + ": truncated at record " + std::to_string(i));
    FrameRecord& r = records[i];
    r.label = static_cast<std::uint8_t>(buf[0]);
    r.snr_db = static_cast<std::int8_t>(buf[1]);
    r.iq.resize(2 * static_cast<std::size_t>(m.frame_len));
    for (std::size_t k = 0; k < r.iq.size(); ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[2 + 4 * k + b])) << (8 * b);
      std::memcpy(&r.iq[k], &bits, 4);
    }
  }
  const std::uint64_t footer = le::get<std::uint64_t>(in, kWhat);
  if (footer != count)
    throw IoError(path.string() + ": footer counts " + std::to_string(footer) + " records, expected " +
                  std::to_string(count) + " (partial write)");
  return Dataset(std::move(m), std::move(records));
}

std::string manifest_text(const DatasetManifest& m) {
  std::ostringstream o;
  o << std::setprecision(17);
  o << "format = CNDS\n";
  o << "version = " << m.version << "\n";
  o << "frame_len = " << m.frame_len << "\n";
  o << "schemes = ";
  for (std::size_t i = 0; i < m.schemes.size(); ++i)
    o << (i ? "," : "") << modem::scheme_name(m.schemes[i]);
  o << "\nlabels = ";
  for (std::size_t i = 0; i < m.schemes.size(); ++i) o << (i ? "," : "") << int(modem::label_of(m.schemes[i]));
  o << "\nsnrs_db = ";
  for (std::size_t i = 0; i < m.snrs_db.size(); ++i) {
    o << (i ? "," : "");
    if (m.snrs_db[i] == kCleanSnr)
      o << "clean";
    else
      o << int(m.snrs_db[i]);
  }
  o << "\nframes_per_cell = " << m.frames_per_cell << "\n";
  o << "scenario = " << channel::scenario_name(m.scenario) << "\n";
  o << "max_doppler_hz = " << m.max_doppler_hz << "\n";
  o << "sample_rate_hz = " << m.sample_rate_hz << "\n";
  o << "master_seed = " << m.master_seed << "\n";
  o << "record_count = " << m.record_count() << "\n";
  return o.str();
}

void write_sidecar(const DatasetManifest& m, std::uint64_t checksum, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << manifest_text(m) << "checksum_fnv1a64 = " << std::hex << std::setw(16) << std::setfill('0') << checksum
      << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 0xCBF29CE484222325ULL;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h = fnv1a(h, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h;
}

void frame_into(const FrameRecord& r, std::size_t length, float* dst) {
  const std::size_t stored = r.iq.size() / 2;
  if (length == 0) throw LengthError("frame_to_tensor: target length must be >= 1");
  if (length > stored)
    throw LengthError("frame_to_tensor: target length " + std::to_string(length) + " exceeds stored frame length " +
                      std::to_string(stored));
  double acc = 0.0;
  for (std::size_t k = 0; k < 2 * length; ++k) acc += static_cast<double>(r.iq[k]) * r.iq[k];
  const double rms = std::sqrt(acc / static_cast<double>(2 * length));
  if (!(rms > 0.0)) throw DegenerateSignalError("frame_to_tensor: frame has zero power");
  const double inv = 1.0 / rms;
  for (std::size_t k = 0; k < length; ++k) {
    dst[k] = static_cast<float>(r.iq[2 * k] * inv);
    dst[length + k] = static_cast<float>(r.iq[2 * k + 1] * inv);
  }
}

nn::Tensor<float> frame_to_tensor(const FrameRecord& r, std::size_t length) {
  nn::Tensor<float> t(nn::Shape{1, 2, length, 1}, nn::uninitialized);
  frame_into(r, length, t.ptr());
  return t;
}

void SplitSpec::validate() const {
  for (double f : {train, val, test})
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split: fractions must lie in [0, 1]");
  if (std::abs(train + val + test - 1.0) > 1e-9)
    throw ConfigError("split: fractions sum to " + std::to_string(train + val + test) + ", expected 1");
}

Splits split_dataset(const DatasetManifest& m, const SplitSpec& spec) {
  spec.validate();
  m.validate();
  const std::size_t n = m.frames_per_cell;
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.train));
  const auto n_val = std::min(n - std::min(n, n_train),
                              static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.val)));
  Splits out;
  std::vector<std::size_t> cell(n);
  for (std::size_t c = 0; c < m.cell_count(); ++c) {
    for (std::size_t i = 0; i < n; ++i) cell[i] = c * n + i;
    std::mt19937_64 rng(derive_seed(spec.seed, {c}));
    std::shuffle(cell.begin(), cell.end(), rng);
    const std::size_t a = std::min(n, n_train);
    const std::size_t b = a + n_val;
    out.train.insert(out.train.end(), cell.begin(), cell.begin() + static_cast<std::ptrdiff_t>(a));
    out.val.insert(out.val.end(), cell.begin() + static_cast<std::ptrdiff_t>(a), cell.begin() + static_cast<std::ptrdiff_t>(b));
    out.test.insert(out.test.end(), cell.begin() + static_cast<std::ptrdiff_t>(b), cell.end());
  }
  for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, std::size_t length) {
  const DatasetManifest& m = data.manifest();
  const std::size_t classes = m.schemes.size();
  Batch b;
  b.frames = nn::Tensor<float>(nn::Shape{indices.size(), 2, length, 1}, nn::uninitialized);
  b.targets = nn::Tensor<float>(nn::Shape{indices.size(), 1, 1, classes});
  b.indices.assign(indices.begin(), indices.end());
  b.classes.resize(indices.size());
  b.snrs.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const FrameRecord& r = data.record(indices[i]);
    frame_into(r, length, b.frames.ptr() + i * 2 * length);
    b.classes[i] = m.class_of(r.label);
    b.snrs[i] = r.snr_db;
    b.targets[i * classes + b.classes[i]] = 1.0f;
  }
  return b;
}

MinibatchStream::MinibatchStream(const Dataset& data, std::vector<std::size_t> indices, std::size_t batch_size,
                                 std::uint64_t shuffle_seed, std::size_t length, bool shuffle)
    : data_(&data),
      indices_(std::move(indices)),
      batch_size_(batch_size),
      seed_(shuffle_seed),
      length_(length),
      shuffle_(shuffle) {
  if (indices_.empty()) throw ConfigError("minibatches: index list is empty");
  if (batch_size_ == 0) throw ConfigError("minibatches: batch_size must be >= 1");
  for (std::size_t i : indices_)
    if (i >= data.size())
      throw ConfigError("minibatches: index " + std::to_string(i) + " outside dataset of " +
                        std::to_string(data.size()) + " records");
  const std::size_t stored = data.manifest().frame_len;
  if (length_ == 0 || length_ > stored)
    throw LengthError("minibatches: signal length " + std::to_string(length_) + " does not fit stored frame length " +
                      std::to_string(stored));
  begin_epoch(0);
}

void MinibatchStream::begin_epoch(std::uint64_t epoch) {
  order_ = indices_;
  if (shuffle_) {
    std::mt19937_64 rng(derive_seed(seed_, {epoch}));
    std::shuffle(order_.begin(), order_.end(), rng);
  }
  cursor_ = 0;
}

bool MinibatchStream::next(Batch& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
  out = make_batch(*data_, std::span<const std::size_t>(order_.data() + cursor_, n), length_);
  cursor_ += n;
  return true;
}

std::size_t MinibatchStream::batches_per_epoch() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

}  // namespace chainnet::dataset
