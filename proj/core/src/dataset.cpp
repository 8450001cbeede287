#include <limits>

#include "asi/envs.hpp"
#include "asi/errors.hpp"
#include "binary_io.hpp"

namespace asi {

namespace {
constexpr char kDatasetMagic[8] = {'A', 'S', 'I', 'T', 'R', 'A', 'J', '1'};
}  // namespace

void write_dataset(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path) {
  if (trajectories.empty()) throw ContractError("write_dataset: no trajectories");
  const Shape frame_shape = trajectories.front().frames.at(0).shape();
  if (frame_shape.size() != 3) throw DimensionError("write_dataset: frames must be [C, H, W]");

  detail::ByteWriter out;
  out.put_bytes(kDatasetMagic, 8);
  out.put(static_cast<std::uint32_t>(trajectories.size()));
  for (const auto& traj : trajectories) {
    if (traj.frames.empty()) throw ContractError("write_dataset: empty trajectory");
    out.put(static_cast<std::uint32_t>(traj.label));
    out.put(static_cast<std::uint32_t>(traj.frames.size()));
    out.put(static_cast<std::uint16_t>(frame_shape[1]));
    out.put(static_cast<std::uint16_t>(frame_shape[2]));
    out.put(static_cast<std::uint8_t>(frame_shape[0]));
    for (const auto& frame : traj.frames) {
      if (frame.shape() != frame_shape) {
        throw DimensionError("write_dataset: non-uniform frame shape " +
                             shape_string(frame.shape()) + " vs " + shape_string(frame_shape));
      }
      for (Real v : frame.data()) out.put_f32(static_cast<float>(v));
    }
  }
  out.write_to(path);
}

std::vector<Trajectory> read_dataset(const std::filesystem::path& path) {
  auto in = detail::ByteReader::from_file(path);
  in.expect_magic(kDatasetMagic);
  const auto count = in.get<std::uint32_t>("trajectory count");
  std::vector<Trajectory> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    Trajectory traj;
    traj.label = in.get<std::uint32_t>("label");
    const auto length = in.get<std::uint32_t>("trajectory length");
    const auto h = in.get<std::uint16_t>("height");
    const auto w = in.get<std::uint16_t>("width");
    const auto c = in.get<std::uint8_t>("channels");
    if (length == 0 || h == 0 || w == 0 || c == 0) {
      throw FormatError("zero-sized trajectory header", in.offset());
    }
    const std::size_t per_frame = std::size_t{c} * h * w;
    if (in.remaining() / 4 / per_frame < length) {
      throw FormatError("truncated frame data for trajectory " + std::to_string(i), in.offset());
    }
    for (std::uint32_t t = 0; t < length; ++t) {
      std::vector<Real> values(per_frame);
      for (auto& v : values) v = in.get_f32("frame value");
      traj.frames.push_back(Tensor::from({c, h, w}, std::move(values)));
    }
    out.push_back(std::move(traj));
  }
  if (!in.at_end()) throw FormatError("trailing bytes after last trajectory", in.offset());
  if (out.empty()) throw FormatError("dataset holds no trajectories", in.offset());
  return out;
}

std::uint64_t dataset_fingerprint(const std::vector<Trajectory>& trajectories) {
  // FNV-1a over labels, lengths and the f32 image of every value.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto feed = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& traj : trajectories) {
    feed(traj.label);
    feed(traj.frames.size());
    for (const auto& f : traj.frames)
      for (Real v : f.data()) feed(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return h;
}

}  // namespace asi
