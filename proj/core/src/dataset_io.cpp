#include "nrf/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nrf {

namespace fs = std::filesystem;

void write_ppm(const std::string& path, const ColorImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(img.width * 3);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const Eigen::Vector3f& v = img.at(r, c);
      for (int k = 0; k < 3; ++k)
        row[3 * c + k] =
            (unsigned char)std::clamp((int)std::lround(v[k] * 255.0f), 0, 255);
    }
    os.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
}

namespace {

void skip_pnm_whitespace(std::istream& is) {
  while (true) {
    int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
}

}  // namespace

ColorImage read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::string magic;
  is >> magic;
  if (magic != "P6") throw std::runtime_error("not a P6 ppm: " + path);
  int w, h, maxval;
  skip_pnm_whitespace(is);
  is >> w;
  skip_pnm_whitespace(is);
  is >> h;
  skip_pnm_whitespace(is);
  is >> maxval;
  is.get();  // single whitespace after header
  ColorImage img(w, h);
  std::vector<unsigned char> row(w * 3);
  for (int r = 0; r < h; ++r) {
    is.read(reinterpret_cast<char*>(row.data()), row.size());
    for (int c = 0; c < w; ++c)
      img.at(r, c) = Eigen::Vector3f(row[3 * c], row[3 * c + 1], row[3 * c + 2]) /
                     255.0f;
  }
  if (!is) throw std::runtime_error("truncated ppm: " + path);
  return img;
}

void write_pgm16(const std::string& path, const DepthImage& img,
                 double depth_scale) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "P5\n" << img.width << " " << img.height << "\n65535\n";
  std::vector<unsigned char> row(img.width * 2);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const double units = img.at(r, c) / depth_scale;
      const int v = std::clamp((int)std::lround(units), 0, 65535);
      row[2 * c] = (unsigned char)(v >> 8);  // big-endian per the format
      row[2 * c + 1] = (unsigned char)(v & 0xff);
    }
    os.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
}

DepthImage read_pgm16(const std::string& path, double depth_scale) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw std::runtime_error("not a P5 pgm: " + path);
  int w, h, maxval;
  skip_pnm_whitespace(is);
  is >> w;
  skip_pnm_whitespace(is);
  is >> h;
  skip_pnm_whitespace(is);
  is >> maxval;
  is.get();
  DepthImage img(w, h);
  std::vector<unsigned char> row(w * 2);
  for (int r = 0; r < h; ++r) {
    is.read(reinterpret_cast<char*>(row.data()), row.size());
    for (int c = 0; c < w; ++c) {
      const int v = (row[2 * c] << 8) | row[2 * c + 1];
      img.at(r, c) = (float)(v * depth_scale);
    }
  }
  if (!is) throw std::runtime_error("truncated pgm: " + path);
  return img;
}

void write_trajectory(const std::string& path,
                      const std::vector<TrajectoryEntry>& entries) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "# timestamp tx ty tz qx qy qz qw\n";
  char buf[512];
  for (const TrajectoryEntry& e : entries) {
    std::snprintf(buf, sizeof(buf),
                  "%.6f %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  e.timestamp, e.pose.translation.x(), e.pose.translation.y(),
                  e.pose.translation.z(), e.pose.rotation.x(),
                  e.pose.rotation.y(), e.pose.rotation.z(),
                  e.pose.rotation.w());
    os << buf;
  }
}

std::vector<TrajectoryEntry> read_trajectory(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::vector<TrajectoryEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    TrajectoryEntry e;
    double qx, qy, qz, qw;
    if (ss >> e.timestamp >> e.pose.translation.x() >>
        e.pose.translation.y() >> e.pose.translation.z() >> qx >> qy >> qz >>
        qw) {
      e.pose.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized();
      out.push_back(e);
    }
  }
  return out;
}

void export_sequence(const std::string& dir,
                     const std::vector<FramePtr>& frames,
                     bool with_groundtruth, const SequenceOptions& opts) {
  fs::create_directories(fs::path(dir) / "rgb");
  fs::create_directories(fs::path(dir) / "depth");
  std::ofstream rgb_list(fs::path(dir) / "rgb.txt");
  std::ofstream depth_list(fs::path(dir) / "depth.txt");
  rgb_list << "# timestamp filename\n";
  depth_list << "# timestamp filename\n";
  std::vector<TrajectoryEntry> gt;
  char name[64];
  for (const FramePtr& f : frames) {
    std::snprintf(name, sizeof(name), "%.6f", f->timestamp);
    const std::string rgb_rel = std::string("rgb/") + name + ".ppm";
    const std::string depth_rel = std::string("depth/") + name + ".pgm";
    write_ppm((fs::path(dir) / rgb_rel).string(), f->color);
    write_pgm16((fs::path(dir) / depth_rel).string(), f->depth,
                opts.depth_scale);
    rgb_list << name << " " << rgb_rel << "\n";
    depth_list << name << " " << depth_rel << "\n";
    if (with_groundtruth) gt.push_back({f->timestamp, f->pose});
  }
  if (with_groundtruth)
    write_trajectory((fs::path(dir) / "groundtruth.txt").string(), gt);
}

namespace {

std::vector<std::pair<double, std::string>> read_file_list(
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::vector<std::pair<double, std::string>> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double t;
    std::string file;
    if (ss >> t >> file) out.emplace_back(t, file);
  }
  return out;
}

}  // namespace

LoadedSequence load_sequence(const std::string& dir,
                             const SequenceOptions& opts) {
  LoadedSequence seq;
  const auto rgb = read_file_list((fs::path(dir) / "rgb.txt").string());
  const auto depth = read_file_list((fs::path(dir) / "depth.txt").string());

  // Nearest-neighbor association of depth entries to each rgb timestamp.
  size_t j = 0;
  int index = 0;
  for (const auto& [t, rgb_file] : rgb) {
    while (j + 1 < depth.size() &&
           std::abs(depth[j + 1].first - t) <= std::abs(depth[j].first - t))
      ++j;
    if (depth.empty() || std::abs(depth[j].first - t) > opts.max_association_dt) {
      ++seq.skipped;
      continue;
    }
    auto frame = std::make_shared<FramePacket>();
    frame->index = index++;
    frame->timestamp = t;
    frame->color = read_ppm((fs::path(dir) / rgb_file).string());
    frame->depth =
        read_pgm16((fs::path(dir) / depth[j].second).string(), opts.depth_scale);
    seq.frames.push_back(std::move(frame));
  }
  const auto gt_path = fs::path(dir) / "groundtruth.txt";
  if (fs::exists(gt_path)) seq.groundtruth = read_trajectory(gt_path.string());
  return seq;
}

}  // namespace nrf
