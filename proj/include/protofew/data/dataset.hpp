#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "protofew/data/image.hpp"
#include "protofew/data/split.hpp"

namespace protofew::data {

struct ItemRef {
  std::size_t cls = 0;
  std::size_t index = 0;

  friend bool operator==(const ItemRef&, const ItemRef&) = default;
  friend auto operator<=>(const ItemRef&, const ItemRef&) = default;
};

/// Labeled image collection: one list of images per class. File-backed
/// datasets decode on demand through a bounded cache shared by copies;
/// cache hits never change the decoded values.
class ImageDataset {
 public:
  struct ClassImages {
    std::string name;
    std::vector<Image> images;
  };
  struct ClassFiles {
    std::string name;
    std::vector<std::filesystem::path> files;
  };

  static ImageDataset from_images(std::string id, std::vector<ClassImages> classes);
  static ImageDataset from_files(std::string id, std::vector<ClassFiles> classes,
                                 std::size_t cache_capacity = 4096);

  const std::string& id() const { return id_; }
  std::size_t num_classes() const { return classes_.size(); }
  const std::string& class_name(std::size_t cls) const;
  std::size_t class_size(std::size_t cls) const;
  std::size_t size() const;
  /// Every item, class-major, in index order.
  std::vector<ItemRef> items() const;

  /// Empty path for in-memory images.
  std::filesystem::path path(ItemRef item) const;
  Image image(ItemRef item) const;

  /// Classes by name, in the given order; throws IngestionError for unknown
  /// names.
  ImageDataset select(const std::vector<std::string>& names, std::string id) const;

 private:
  struct Storage;
  struct ClassEntry {
    std::string name;
    std::size_t storage_class = 0;
  };

  ImageDataset() = default;
  std::size_t check(ItemRef item) const;

  std::string id_;
  std::shared_ptr<Storage> storage_;
  std::vector<ClassEntry> classes_;
};

/// Indexes `root/<class>/` for every class of `section`: either the files
/// the split lists for that class or every regular file, sorted by path.
ImageDataset load_dataset(const std::filesystem::path& root, const ClassSplit& split,
                          Section section);

/// Writes `root/<class>/NNNNN.png` for every item plus `root/split.csv` that
/// assigns each class to the section given by `sections` (all train when
/// empty).
void export_dataset(const ImageDataset& dataset, const std::filesystem::path& root,
                    const ClassSplit* sections = nullptr);

/// [n,3,R,R] batch of preprocessed items.
num::Tensor<float> make_batch(const ImageDataset& dataset, std::span<const ItemRef> items,
                              std::size_t resolution, const Normalization& normalization);

}  // namespace protofew::data
