#include "orid/vision.hpp"

#include <stdexcept>
#include <string>

namespace orid {

namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) { return std::to_string(r) + "x" + std::to_string(c); }

nn::FeatureMap run_blocks(const std::vector<nn::Conv2d>& blocks, nn::FeatureMap x, std::size_t from,
                          std::size_t to) {
  for (std::size_t i = from; i < to; ++i) {
    x = blocks[i](x);
    x.data = ag::relu(x.data);
  }
  return x;
}

int size_after(int size, std::size_t blocks) {
  for (std::size_t i = 0; i < blocks; ++i) size = ag::conv_out_size(size, 3, 2, 1);
  return size;
}

}  // namespace

void VisionConfig::validate() const {
  if (image_size < 1 || image_channels < 1 || grid < 1 || dim < 1)
    throw std::invalid_argument("vision: sizes must be positive");
  if (raw_channels.empty() || mask_channels.empty()) throw std::invalid_argument("vision: empty backbone");
  if (raw_tap < 1 || raw_tap > static_cast<int>(raw_channels.size()))
    throw std::invalid_argument("vision: mid tap must name one of the raw blocks");
  if (mask_pool < 1 || image_size % mask_pool != 0)
    throw std::invalid_argument("vision: mask pooling factor must divide the image size");
  if (size_after(image_size, raw_channels.size()) < grid ||
      size_after(image_size / mask_pool, mask_channels.size()) < grid)
    throw std::invalid_argument("vision: final map is smaller than the feature grid");
}

Matrix image_to_matrix(const Image& img) {
  Matrix m(img.channels, static_cast<Eigen::Index>(img.height) * img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) m(c, static_cast<Eigen::Index>(y) * img.width + x) = img.at(y, x, c);
  return m;
}

Matrix mask_to_matrix(const MaskStack& s) {
  Matrix m(s.channels, static_cast<Eigen::Index>(s.height) * s.width);
  for (int c = 0; c < s.channels; ++c)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) m(c, static_cast<Eigen::Index>(y) * s.width + x) = s.at(c, y, x);
  return m;
}

Matrix adaptive_pool_matrix(int height, int width, int grid) {
  if (height < grid || width < grid) throw std::invalid_argument("pool: map smaller than grid");
  Matrix p = Matrix::Zero(static_cast<Eigen::Index>(height) * width, static_cast<Eigen::Index>(grid) * grid);
  for (int gy = 0; gy < grid; ++gy) {
    const int y0 = gy * height / grid, y1 = ((gy + 1) * height + grid - 1) / grid;
    for (int gx = 0; gx < grid; ++gx) {
      const int x0 = gx * width / grid, x1 = ((gx + 1) * width + grid - 1) / grid;
      const double w = 1.0 / static_cast<double>((y1 - y0) * (x1 - x0));
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) p(static_cast<Eigen::Index>(y) * width + x, gy * grid + gx) = w;
    }
  }
  return p;
}

RawImageExtractor::RawImageExtractor(nn::ParamStore& store, const VisionConfig& cfg, nn::Initializer& init)
    : cfg_(cfg) {
  cfg.validate();
  int in = cfg.image_channels;
  for (std::size_t i = 0; i < cfg.raw_channels.size(); ++i) {
    blocks_.emplace_back(store, "vision.raw.conv" + std::to_string(i), in, cfg.raw_channels[i], 3, 2, 1, init,
                         nn::ParamGroup::ImageExtractor);
    in = cfg.raw_channels[i];
  }
  const auto tap = static_cast<std::size_t>(cfg.raw_tap);
  mid_proj_ = nn::Linear(store, "vision.raw.mid_proj", cfg.raw_channels[tap - 1], cfg.dim, init,
                         nn::ParamGroup::ImageExtractor);
  final_proj_ = nn::Linear(store, "vision.raw.final_proj", cfg.raw_channels.back(), cfg.dim, init,
                           nn::ParamGroup::ImageExtractor);
  const int mid_size = size_after(cfg.image_size, tap);
  const int final_size = size_after(cfg.image_size, cfg.raw_channels.size());
  mid_pool_ = adaptive_pool_matrix(mid_size, mid_size, cfg.grid);
  final_pool_ = adaptive_pool_matrix(final_size, final_size, cfg.grid);
}

RawImageExtractor::Output RawImageExtractor::operator()(const Var& pixels) const {
  const Eigen::Index hw = static_cast<Eigen::Index>(cfg_.image_size) * cfg_.image_size;
  if (pixels.rows() != cfg_.image_channels || pixels.cols() != hw)
    throw std::invalid_argument("image extractor: expected " + shape_str(cfg_.image_channels, hw) +
                                " pixel matrix, got " + shape_str(pixels.rows(), pixels.cols()));
  const auto tap = static_cast<std::size_t>(cfg_.raw_tap);
  nn::FeatureMap mid = run_blocks(blocks_, {pixels, cfg_.image_size, cfg_.image_size}, 0, tap);
  nn::FeatureMap last = run_blocks(blocks_, mid, tap, blocks_.size());
  Output out;
  out.mid = mid_proj_(ag::transpose(ag::matmul(mid.data, ag::constant(mid_pool_))));
  out.final = final_proj_(ag::transpose(ag::matmul(last.data, ag::constant(final_pool_))));
  return out;
}

RawImageExtractor::Output RawImageExtractor::extract(const Image& img) const {
  if (img.height != cfg_.image_size || img.width != cfg_.image_size || img.channels != cfg_.image_channels)
    throw std::invalid_argument("image extractor: expected image of shape " + std::to_string(cfg_.image_size) +
                                "x" + std::to_string(cfg_.image_size) + "x" + std::to_string(cfg_.image_channels) +
                                ", got " + std::to_string(img.height) + "x" + std::to_string(img.width) + "x" +
                                std::to_string(img.channels));
  return (*this)(ag::constant(image_to_matrix(img)));
}

MaskExtractor::MaskExtractor(nn::ParamStore& store, const VisionConfig& cfg, nn::Initializer& init) : cfg_(cfg) {
  cfg.validate();
  for (OrganId o : kAllOrgans)
    adapters_[index_of(o)] = nn::Conv2d(store, "vision.mask.adapter." + std::string(organ_name(o)), mask_channels(o),
                                        cfg.mask_adapter, 1, 1, 0, init, nn::ParamGroup::ImageExtractor);
  int in = cfg.mask_adapter;
  for (std::size_t i = 0; i < cfg.mask_channels.size(); ++i) {
    blocks_.emplace_back(store, "vision.mask.conv" + std::to_string(i), in, cfg.mask_channels[i], 3, 2, 1, init,
                         nn::ParamGroup::ImageExtractor);
    in = cfg.mask_channels[i];
  }
  proj_ = nn::Linear(store, "vision.mask.proj", in, cfg.dim, init, nn::ParamGroup::ImageExtractor);
  const int size = size_after(cfg.image_size / cfg.mask_pool, cfg.mask_channels.size());
  pool_ = adaptive_pool_matrix(size, size, cfg.grid);
}

OrganArray<Var> MaskExtractor::operator()(const OrganArray<Var>& stacks) const {
  const Eigen::Index hw = static_cast<Eigen::Index>(cfg_.image_size) * cfg_.image_size;
  OrganArray<Var> out;
  for (OrganId o : kAllOrgans) {
    const Var& s = stacks[index_of(o)];
    if (s.rows() != mask_channels(o))
      throw std::invalid_argument("mask stack for " + std::string(organ_name(o)) + " has " +
                                  std::to_string(s.rows()) + " channels, expected " +
                                  std::to_string(mask_channels(o)));
    if (s.cols() != hw)
      throw std::invalid_argument("mask stack for " + std::string(organ_name(o)) + ": expected " +
                                  std::to_string(cfg_.image_size) + "x" + std::to_string(cfg_.image_size) +
                                  " pixels per channel");
    const int pooled = cfg_.image_size / cfg_.mask_pool;
    nn::FeatureMap x = adapters_[index_of(o)](
        {ag::avg_pool(s, cfg_.image_size, cfg_.image_size, cfg_.mask_pool), pooled, pooled});
    x.data = ag::relu(x.data);
    x = run_blocks(blocks_, x, 0, blocks_.size());
    out[index_of(o)] = proj_(ag::transpose(ag::matmul(x.data, ag::constant(pool_))));
  }
  return out;
}

OrganArray<Var> MaskExtractor::extract(const MaskBundle& masks) const {
  validate_mask_bundle(masks);
  OrganArray<Var> stacks;
  for (OrganId o : kAllOrgans) stacks[index_of(o)] = ag::constant(mask_to_matrix(masks[o]));
  return (*this)(stacks);
}

OrganArray<Var> organ_image_features(const OrganArray<Var>& mask_feats, const Var& raw_mid) {
  OrganArray<Var> out;
  for (OrganId o : kAllOrgans) {
    const Var& m = mask_feats[index_of(o)];
    if (m.rows() != raw_mid.rows() || m.cols() != raw_mid.cols())
      throw std::invalid_argument("organ features: mask feature " + shape_str(m.rows(), m.cols()) +
                                  " does not match raw feature " + shape_str(raw_mid.rows(), raw_mid.cols()));
    out[index_of(o)] = ag::mul(m, raw_mid);
  }
  return out;
}

}  // namespace orid
