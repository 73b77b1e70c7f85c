#pragma once

#include <string>
#include <vector>

namespace c2c {

// IDX binary format (the MNIST distribution format):
//
// image file (magic 0x00000803):
//   [offset] [type]           [description]
//   0000     32-bit int (BE)  magic number 2051
//   0004     32-bit int (BE)  number of images
//   0008     32-bit int (BE)  number of rows
//   0012     32-bit int (BE)  number of columns
//   0016...  unsigned byte    pixels, row-major, 0..255
//
// label file (magic 0x00000801):
//   0000     32-bit int (BE)  magic number 2049
//   0004     32-bit int (BE)  number of items
//   0008...  unsigned byte    labels, 0..9

struct IdxImages {
    int rows = 0;
    int cols = 0;
    std::vector<std::vector<double>> images; // each rows*cols, scaled to [0,1]
};

// Throws IoError if the file cannot be read, FormatError on a wrong magic
// number or out-of-range label, LengthError on a truncated payload.
IdxImages load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

} // namespace c2c
