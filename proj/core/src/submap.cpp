#include "nrf/submap.hpp"

#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace nrf {

namespace {

constexpr char kMagic[8] = {'N', 'R', 'F', 'S', '0', '0', '0', '1'};

void put_f64(std::ostream& os, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= uint64_t(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

void NeuralSubmap::save(std::ostream& os) const {
  os.write(kMagic, 8);
  const int32_t meta[3] = {id, (int32_t)status, previous_id};
  os.write(reinterpret_cast<const char*>(meta), sizeof(meta));
  auto put_pose = [&](const Pose& p) {
    put_f64(os, p.rotation.w());
    put_f64(os, p.rotation.x());
    put_f64(os, p.rotation.y());
    put_f64(os, p.rotation.z());
    for (int i = 0; i < 3; ++i) put_f64(os, p.translation[i]);
  };
  put_pose(pose);
  put_pose(motion_from_previous);
  for (int i = 0; i < 3; ++i) put_f64(os, volume.min_corner[i]);
  for (int i = 0; i < 3; ++i) put_f64(os, volume.max_corner[i]);
  put_f64(os, volume.max_side);
  tsdf.serialize(os);
  radiance.serialize(os);
}

std::unique_ptr<NeuralSubmap> NeuralSubmap::load(std::istream& is,
                                                 const FieldConfig& cfg) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("bad submap blob magic");
  auto sm = std::make_unique<NeuralSubmap>();
  int32_t meta[3];
  is.read(reinterpret_cast<char*>(meta), sizeof(meta));
  sm->id = meta[0];
  sm->status = (Status)meta[1];
  sm->previous_id = meta[2];
  auto get_pose = [&]() {
    Pose p;
    const double w = get_f64(is), x = get_f64(is), y = get_f64(is), z = get_f64(is);
    p.rotation = Eigen::Quaterniond(w, x, y, z).normalized();
    for (int i = 0; i < 3; ++i) p.translation[i] = get_f64(is);
    return p;
  };
  sm->pose = get_pose();
  sm->motion_from_previous = get_pose();
  for (int i = 0; i < 3; ++i) sm->volume.min_corner[i] = get_f64(is);
  for (int i = 0; i < 3; ++i) sm->volume.max_corner[i] = get_f64(is);
  sm->volume.max_side = get_f64(is);
  sm->tsdf = TsdfField::deserialize(is, cfg);
  sm->radiance = RadianceField::deserialize(is, cfg);
  if (!is) throw std::runtime_error("truncated submap blob");
  return sm;
}

}  // namespace nrf
