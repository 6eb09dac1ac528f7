#include "protofew/data/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <unordered_map>

#include "protofew/errors.hpp"

namespace protofew::data {

namespace fs = std::filesystem;

struct ImageDataset::Storage {
  std::vector<std::vector<Image>> images;
  std::vector<std::vector<fs::path>> files;
  std::vector<std::size_t> offsets;  // flat id of each class's first item

  std::size_t capacity = 0;
  std::mutex mu;
  std::unordered_map<std::size_t, Image> cache;
  std::deque<std::size_t> order;

  bool file_backed() const { return !files.empty(); }

  Image load(std::size_t cls, std::size_t index) {
    if (!file_backed()) return images[cls][index];
    const std::size_t key = offsets[cls] + index;
    {
      std::lock_guard lock(mu);
      if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    Image img = decode_image(files[cls][index]);
    std::lock_guard lock(mu);
    if (capacity > 0 && cache.emplace(key, img).second) {
      order.push_back(key);
      while (order.size() > capacity) {
        cache.erase(order.front());
        order.pop_front();
      }
    }
    return img;
  }
};

ImageDataset ImageDataset::from_images(std::string id, std::vector<ClassImages> classes) {
  ImageDataset ds;
  ds.id_ = std::move(id);
  ds.storage_ = std::make_shared<Storage>();
  std::size_t offset = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].images.empty()) {
      throw IngestionError("dataset " + ds.id_ + ": class '" + classes[c].name + "' is empty");
    }
    ds.classes_.push_back({classes[c].name, c});
    ds.storage_->offsets.push_back(offset);
    offset += classes[c].images.size();
    ds.storage_->images.push_back(std::move(classes[c].images));
  }
  return ds;
}

ImageDataset ImageDataset::from_files(std::string id, std::vector<ClassFiles> classes,
                                      std::size_t cache_capacity) {
  ImageDataset ds;
  ds.id_ = std::move(id);
  ds.storage_ = std::make_shared<Storage>();
  ds.storage_->capacity = cache_capacity;
  std::size_t offset = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].files.empty()) {
      throw IngestionError("dataset " + ds.id_ + ": class '" + classes[c].name + "' is empty");
    }
    ds.classes_.push_back({classes[c].name, c});
    ds.storage_->offsets.push_back(offset);
    offset += classes[c].files.size();
    ds.storage_->files.push_back(std::move(classes[c].files));
  }
  return ds;
}

const std::string& ImageDataset::class_name(std::size_t cls) const {
  return classes_.at(cls).name;
}

std::size_t ImageDataset::class_size(std::size_t cls) const {
  const std::size_t s = classes_.at(cls).storage_class;
  return storage_->file_backed() ? storage_->files[s].size() : storage_->images[s].size();
}

std::size_t ImageDataset::size() const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < classes_.size(); ++c) n += class_size(c);
  return n;
}

std::vector<ItemRef> ImageDataset::items() const {
  std::vector<ItemRef> out;
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    for (std::size_t i = 0; i < class_size(c); ++i) out.push_back({c, i});
  }
  return out;
}

std::size_t ImageDataset::check(ItemRef item) const {
  if (item.cls >= classes_.size() || item.index >= class_size(item.cls)) {
    throw ContractViolation("dataset " + id_ + ": item (" + std::to_string(item.cls) + "," +
                            std::to_string(item.index) + ") out of range");
  }
  return classes_[item.cls].storage_class;
}

fs::path ImageDataset::path(ItemRef item) const {
  const std::size_t s = check(item);
  return storage_->file_backed() ? storage_->files[s][item.index] : fs::path();
}

Image ImageDataset::image(ItemRef item) const {
  return storage_->load(check(item), item.index);
}

ImageDataset ImageDataset::select(const std::vector<std::string>& names, std::string id) const {
  ImageDataset out;
  out.id_ = std::move(id);
  out.storage_ = storage_;
  for (const auto& name : names) {
    const auto it = std::find_if(classes_.begin(), classes_.end(),
                                 [&](const ClassEntry& e) { return e.name == name; });
    if (it == classes_.end()) {
      throw IngestionError("dataset " + id_ + ": no class '" + name + "'");
    }
    out.classes_.push_back(*it);
  }
  return out;
}

ImageDataset load_dataset(const fs::path& root, const ClassSplit& split, Section section) {
  if (!fs::is_directory(root)) throw IngestionError("dataset root not found: " + root.string());
  const auto& names = split.classes(section);
  if (names.empty()) {
    throw IngestionError("split has no classes in section " + std::string(section_name(section)));
  }
  std::vector<ImageDataset::ClassFiles> classes;
  for (const auto& name : names) {
    const fs::path dir = root / name;
    if (!fs::is_directory(dir)) throw IngestionError("missing class directory " + dir.string());
    ImageDataset::ClassFiles entry{name, {}};
    if (auto it = split.files.find(name); it != split.files.end() && !it->second.empty()) {
      for (const auto& f : it->second) {
        const fs::path p = dir / f;
        if (!fs::is_regular_file(p)) throw IngestionError("missing image " + p.string());
        entry.files.push_back(p);
      }
    } else {
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) entry.files.push_back(e.path());
      }
    }
    std::sort(entry.files.begin(), entry.files.end());
    if (entry.files.empty()) throw IngestionError("empty class directory " + dir.string());
    classes.push_back(std::move(entry));
  }
  return ImageDataset::from_files(root.string() + ":" + section_name(section), std::move(classes));
}

void export_dataset(const ImageDataset& dataset, const fs::path& root, const ClassSplit* sections) {
  fs::create_directories(root);
  ClassSplit out;
  for (std::size_t c = 0; c < dataset.num_classes(); ++c) {
    const auto& name = dataset.class_name(c);
    fs::create_directories(root / name);
    for (std::size_t i = 0; i < dataset.class_size(c); ++i) {
      char file[32];
      std::snprintf(file, sizeof file, "%05zu.png", i);
      write_png(dataset.image({c, i}), root / name / file);
    }
    Section s = Section::Train;
    if (sections) {
      for (Section cand : {Section::Train, Section::Val, Section::Test}) {
        const auto& list = sections->classes(cand);
        if (std::find(list.begin(), list.end(), name) != list.end()) s = cand;
      }
    }
    out.classes(s).push_back(name);
  }
  write_split(out, root / "split.csv");
}

num::Tensor<float> make_batch(const ImageDataset& dataset, std::span<const ItemRef> items,
                              std::size_t resolution, const Normalization& normalization) {
  if (items.empty()) throw ContractViolation("make_batch: no items");
  num::Tensor<float> out({items.size(), 3, resolution, resolution});
  const std::size_t per = 3 * resolution * resolution;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto t = preprocess(dataset.image(items[i]), resolution, normalization);
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

}  // namespace protofew::data
