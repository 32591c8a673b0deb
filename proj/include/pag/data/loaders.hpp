#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pag/data/dataset.hpp"

namespace pag::data {

// Loads a dataset from its standard public distribution layout under
// root/<spec.name>/. Supported names: mnist, usps, svhn, cifar10.
// Pixel values are scaled to [0,1]; SVHN's "10 means 0" labels are normalized.
LabeledDataset load_dataset(const DatasetSpec& spec, Split split, const std::string& root);

// Reads images.txt, image_class_labels.txt, and bounding_boxes.txt from root,
// converting (x, y, w, h) records to corner boxes and 1-based classes to 0-based.
std::vector<CubAnnotation> load_cub_annotations(const std::string& root);

// Dataset cache container: a PGD1 u8 image tensor (values = round(pixel*255))
// followed by a PGD1 i32 label tensor in one file.
void save_cache(const std::string& path, const LabeledDataset& dataset);
LabeledDataset load_cache(const std::string& path, const DatasetSpec& spec, Split split);

// Reads a file into memory, transparently inflating gzip/zlib streams; if path
// is absent, path + ".gz" is tried before failing.
std::vector<uint8_t> read_file_auto(const std::string& path);

}  // namespace pag::data
