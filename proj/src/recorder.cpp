#include "teacar/recorder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <sstream>

#include "teacar/digest.hpp"
#include "teacar/error.hpp"

namespace teacar::recorder {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw ConfigError("cannot write " + path.string());
  }
}

void check_sample(const DatasetSample& s) {
  if (s.image.size() != ImageMsg::kBytes) {
    throw ValidationError("dataset sample image must be 144x224x3 bytes");
  }
  if (!(std::abs(s.steering) <= 1.0)) {
    throw ValidationError("dataset steering label must lie in [-1, 1]");
  }
}

}  // namespace

nlohmann::json DatasetManifest::to_json() const {
  return {{"version", version},           {"image_format", image_format},
          {"count", count},               {"camera", camera},
          {"track_sha256", track_sha256}, {"seed", seed},
          {"index_sha256", index_sha256}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    m.image_format = j.at("image_format").get<std::string>();
    m.count = j.at("count").get<std::size_t>();
    m.camera = j.value("camera", nlohmann::json::object());
    m.track_sha256 = j.value("track_sha256", std::string());
    m.seed = j.value("seed", std::uint64_t{0});
    m.index_sha256 = j.at("index_sha256").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  if (m.version != 1) throw FormatError("manifest: unsupported version " + std::to_string(m.version));
  if (m.image_format != "ppm_p6") throw FormatError("manifest: unsupported image format " + m.image_format);
  return m;
}

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frames/%06zu.ppm", index);
  return buf;
}

std::vector<std::uint8_t> encode_ppm(std::span<const std::uint8_t> rgb, int width, int height) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw ValidationError("encode_ppm: pixel buffer does not match dimensions");
  }
  const std::string header = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

std::vector<std::uint8_t> decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    long v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9' && pos - start < 8) {
      v = v * 10 + (bytes[pos++] - '0');
    }
    if (pos == start) throw FormatError("ppm: malformed header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw FormatError("ppm: not a binary P6 image");
  }
  pos = 2;
  const long w = number();
  const long h = number();
  const long maxval = number();
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("ppm: malformed header");
  ++pos;
  if (w != ImageMsg::kWidth || h != ImageMsg::kHeight || maxval != 255) {
    throw FormatError("ppm: expected 224x144 with maxval 255, got " + std::to_string(w) + "x" +
                      std::to_string(h) + " maxval " + std::to_string(maxval));
  }
  if (bytes.size() - pos != ImageMsg::kBytes) {
    throw FormatError("ppm: pixel data has " + std::to_string(bytes.size() - pos) +
                      " bytes, expected " + std::to_string(ImageMsg::kBytes));
  }
  return {bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end()};
}

// ---------------------------------------------------------------------------
// Writing

DatasetWriter::DatasetWriter(fs::path dir, DatasetManifest meta)
    : dir_(std::move(dir)), meta_(std::move(meta)) {
  std::error_code ec;
  fs::create_directories(dir_ / "frames", ec);
  if (ec) {
    throw ConfigError("cannot create dataset directory " + dir_.string() + ": " + ec.message());
  }
  if (fs::exists(dir_ / "index.jsonl") || fs::exists(dir_ / "manifest.json")) {
    throw ConfigError("dataset directory " + dir_.string() + " already holds a dataset");
  }
  index_.open(dir_ / "index.jsonl", std::ios::binary);
  if (!index_) {
    throw ConfigError("cannot write " + (dir_ / "index.jsonl").string());
  }
}

void DatasetWriter::append(DatasetSample sample) {
  if (finished_) throw StateError("dataset writer already finished");
  check_sample(sample);
  if (sample.image_file.empty()) sample.image_file = frame_name(count_);
  const auto ppm = encode_ppm(sample.image);
  write_file(dir_ / sample.image_file, ppm);
  nlohmann::ordered_json line;
  line["t"] = sample.t_ns;
  line["steering"] = sample.steering;
  line["image"] = sample.image_file;
  line["source"] = sample.source;
  line["sha256"] = sha256_hex(std::span<const std::uint8_t>(ppm));
  const std::string text = line.dump() + "\n";
  index_ << text;
  index_text_ += text;
  ++count_;
}

DatasetManifest DatasetWriter::finish() {
  if (finished_) return meta_;
  index_.close();
  meta_.count = count_;
  meta_.index_sha256 = sha256_hex(std::string_view(index_text_));
  std::ofstream out(dir_ / "manifest.json", std::ios::binary);
  out << meta_.to_json().dump(2) << '\n';
  if (!out) {
    throw ConfigError("cannot write " + (dir_ / "manifest.json").string());
  }
  finished_ = true;
  return meta_;
}

void write_dataset(const fs::path& dir, const Dataset& dataset) {
  DatasetWriter writer(dir, dataset.manifest);
  for (const auto& s : dataset.samples) writer.append(s);
  writer.finish();
}

Dataset read_dataset(const fs::path& dir) {
  Dataset ds;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw FormatError("dataset " + dir.string() + ": missing manifest.json");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("dataset manifest: " + std::string(e.what()));
    }
    ds.manifest = DatasetManifest::from_json(j);
  }

  const auto index_bytes = read_file(dir / "index.jsonl");
  const std::string index_text(index_bytes.begin(), index_bytes.end());
  if (sha256_hex(std::string_view(index_text)) != ds.manifest.index_sha256) {
    throw FormatError("dataset " + dir.string() + ": index.jsonl digest does not match the manifest");
  }

  std::istringstream lines(index_text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const std::string where = "index.jsonl line " + std::to_string(lineno) + ": ";
    DatasetSample s;
    std::string digest;
    try {
      const auto j = nlohmann::json::parse(line);
      s.t_ns = j.at("t").get<std::int64_t>();
      s.steering = j.at("steering").get<double>();
      s.image_file = j.at("image").get<std::string>();
      s.source = j.at("source").get<std::string>();
      digest = j.value("sha256", std::string());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + e.what());
    }
    if (!(std::abs(s.steering) <= 1.0)) {
      throw FormatError(where + "steering label outside [-1, 1]");
    }
    const fs::path frame = dir / s.image_file;
    if (!fs::is_regular_file(frame)) {
      throw FormatError(where + "missing image file " + s.image_file);
    }
    const auto ppm = read_file(frame);
    if (!digest.empty() && sha256_hex(std::span<const std::uint8_t>(ppm)) != digest) {
      throw FormatError(where + "digest mismatch for " + s.image_file);
    }
    try {
      s.image = decode_ppm(ppm);
    } catch (const FormatError& e) {
      throw FormatError(where + s.image_file + ": " + e.what());
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != ds.manifest.count) {
    throw FormatError("dataset " + dir.string() + ": manifest count " +
                      std::to_string(ds.manifest.count) + " but index has " +
                      std::to_string(ds.samples.size()) + " lines");
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synchronization

std::optional<std::size_t> nearest_within(std::int64_t t_ns, std::span<const SteeringStamp> stamps,
                                          std::int64_t window_ns) {
  std::optional<std::size_t> best;
  std::int64_t best_gap = 0;
  for (std::size_t i = 0; i < stamps.size(); ++i) {
    const std::int64_t gap = std::abs(stamps[i].t_ns - t_ns);
    if (gap > window_ns) continue;
    const bool better = !best || gap < best_gap ||
                        (gap == best_gap && stamps[i].t_ns < stamps[*best].t_ns);
    if (better) {
      best = i;
      best_gap = gap;
    }
  }
  return best;
}

Recorder::Recorder(Bus& bus, Topic<ImageMsg> camera_topic, Topic<MotionCmd> steering_topic,
                   RecorderOptions options)
    : bus_(bus), options_(std::move(options)) {
  if (options_.sync_window_ns < 0) {
    throw ValidationError("recorder: sync window must be >= 0");
  }
  image_sub_ = bus_.subscribe<ImageMsg>(camera_topic, [this](const ImageMsg& m) { on_image(m); });
  steering_sub_ =
      bus_.subscribe<MotionCmd>(steering_topic, [this](const MotionCmd& m) { on_steering(m); });
}

Recorder::~Recorder() {
  bus_.unsubscribe(image_sub_);
  bus_.unsubscribe(steering_sub_);
}

void Recorder::start(fs::path dir, DatasetManifest meta) {
  std::scoped_lock lock(write_mutex_, mutex_);
  if (active_) throw StateError("recorder already active");
  writer_ = std::make_unique<DatasetWriter>(std::move(dir), std::move(meta));
  pending_.clear();
  history_.clear();
  ready_.clear();
  accepted_ = 0;
  skipped_ = 0;
  active_ = true;
}

bool Recorder::active() const {
  std::lock_guard lock(mutex_);
  return active_;
}

std::size_t Recorder::recorded() const {
  std::lock_guard lock(mutex_);
  return accepted_;
}

std::size_t Recorder::skipped() const {
  std::lock_guard lock(mutex_);
  return skipped_;
}

std::size_t Recorder::pending() const {
  std::lock_guard lock(mutex_);
  return pending_.size();
}

bool Recorder::full() const {
  std::lock_guard lock(mutex_);
  return options_.max_samples && accepted_ >= *options_.max_samples;
}

void Recorder::on_image(const ImageMsg& img) {
  std::lock_guard lock(mutex_);
  if (!active_) return;
  if (options_.max_samples && accepted_ >= *options_.max_samples) return;
  pending_.push_back({img.header.stamp.nanos, img.data()});
  resolve_locked(img.header.stamp.nanos, false);
}

void Recorder::on_steering(const MotionCmd& cmd) {
  std::lock_guard lock(mutex_);
  if (!active_) return;
  if (!options_.label_source.empty() && cmd.source != options_.label_source) return;
  history_.push_back({cmd.header.stamp.nanos, cmd.value, cmd.source});
  resolve_locked(cmd.header.stamp.nanos, false);
}

void Recorder::resolve_locked(std::int64_t horizon_ns, bool final) {
  const std::int64_t window = options_.sync_window_ns;
  while (!pending_.empty()) {
    PendingImage& p = pending_.front();
    const bool later_seen = !history_.empty() && history_.back().t_ns >= p.t_ns;
    if (!final && !later_seen && horizon_ns <= p.t_ns + window) break;

    const std::vector<SteeringStamp> stamps(history_.begin(), history_.end());
    const auto hit = nearest_within(p.t_ns, stamps, window);
    const bool room = !options_.max_samples || accepted_ < *options_.max_samples;
    if (hit && room) {
      DatasetSample s;
      s.t_ns = p.t_ns;
      s.steering = stamps[*hit].value;
      s.source = stamps[*hit].source;
      s.image = std::move(p.image);
      ready_.push_back(std::move(s));
      ++accepted_;
    } else if (!hit) {
      ++skipped_;
    }
    pending_.pop_front();
  }
  // Stamps too old to pair with any frame still to come.
  const std::int64_t keep_from =
      (pending_.empty() ? horizon_ns : std::min(horizon_ns, pending_.front().t_ns)) - window;
  while (history_.size() > 1 && history_.front().t_ns < keep_from) history_.pop_front();
}

std::size_t Recorder::flush() {
  std::lock_guard wlock(write_mutex_);
  std::deque<DatasetSample> batch;
  {
    std::lock_guard lock(mutex_);
    batch.swap(ready_);
  }
  if (!writer_) return 0;
  for (auto& s : batch) writer_->append(std::move(s));
  return batch.size();
}

DatasetManifest Recorder::stop() {
  std::lock_guard wlock(write_mutex_);
  std::deque<DatasetSample> batch;
  {
    std::lock_guard lock(mutex_);
    if (!active_) throw StateError("recorder is not active");
    resolve_locked(bus_.now().nanos, true);
    active_ = false;
    batch.swap(ready_);
  }
  for (auto& s : batch) writer_->append(std::move(s));
  DatasetManifest m = writer_->finish();
  writer_.reset();
  return m;
}

}  // namespace teacar::recorder
