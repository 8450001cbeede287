#include "asi/checkpoint.hpp"

#include <limits>
#include <optional>

#include "binary_io.hpp"

namespace asi {

namespace {

constexpr char kMetaName[] = "meta.input_shape";

void put_record(detail::ByteWriter& out, const std::string& name, const Shape& shape,
                std::span<const Real> values) {
  if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ContractError("parameter name too long: " + name);
  }
  out.put(static_cast<std::uint16_t>(name.size()));
  out.put_bytes(name.data(), name.size());
  out.put(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t d : shape) out.put(static_cast<std::uint32_t>(d));
  for (Real v : values) out.put_f32(static_cast<float>(v));
}

}  // namespace

void save_checkpoint(const DynamicsModel& model, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.put_bytes(kCheckpointMagic, 8);
  const auto& s = model.input_shape();
  const std::vector<Real> meta{static_cast<Real>(s.channels), static_cast<Real>(s.height),
                               static_cast<Real>(s.width)};
  put_record(out, kMetaName, {3}, meta);
  for (const auto& p : model.parameters()) put_record(out, p.name, p.value.shape(), p.value.data());
  out.write_to(path);
}

DynamicsModel load_checkpoint(const std::filesystem::path& path) {
  auto in = detail::ByteReader::from_file(path);
  in.expect_magic(kCheckpointMagic);

  std::optional<FrameShape> input_shape;
  std::vector<NamedParameter> params;
  while (!in.at_end()) {
    const std::size_t record_start = in.offset();
    const auto name_len = in.get<std::uint16_t>("name length");
    std::string name = in.get_string(name_len, "parameter name");
    const auto rank = in.get<std::uint8_t>("rank");
    Shape shape;
    for (std::uint8_t i = 0; i < rank; ++i) {
      const auto d = in.get<std::uint32_t>("dimension");
      if (d == 0) throw FormatError("zero dimension in record '" + name + "'", in.offset() - 4);
      shape.push_back(d);
    }
    const std::size_t n = shape_numel(shape);
    if (in.remaining() / 4 < n) throw FormatError("truncated values for '" + name + "'", in.offset());
    std::vector<Real> values(n);
    for (auto& v : values) v = in.get_f32("parameter value");

    if (name == kMetaName) {
      if (shape != Shape{3}) throw FormatError("malformed input shape record", record_start);
      input_shape = FrameShape{static_cast<std::size_t>(values[0]),
                               static_cast<std::size_t>(values[1]),
                               static_cast<std::size_t>(values[2])};
    } else {
      params.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
    }
  }
  if (!input_shape) throw FormatError("checkpoint lacks the input shape record", in.offset());
  if (params.empty() || params.front().value.rank() != 4) {
    throw FormatError("checkpoint holds no convolution layers", in.offset());
  }

  const std::size_t layers = params.size() / 2;
  const std::string arch = layers == 7 ? "asi-conv-7" : layers == 3 ? "small-conv-3" : "";
  if (arch.empty()) {
    throw FormatError("no known architecture has " + std::to_string(layers) + " layers",
                      in.offset());
  }
  ArchitectureSpec spec =
      architecture_spec(arch, params.front().value.dim(0), input_shape->channels);
  return DynamicsModel::from_parameters(std::move(spec), *input_shape, std::move(params));
}

}  // namespace asi
