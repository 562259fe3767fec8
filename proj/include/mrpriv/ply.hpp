#pragma once

#include <filesystem>
#include <stdexcept>

#include "mrpriv/geometry.hpp"

namespace mrpriv {

class PlyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PlyFormat { Ascii, BinaryLittleEndian };

/// Reads the vertex element of an ASCII or binary PLY file. x/y/z are
/// required; nx/ny/nz are optional (has_normals is false when absent). Other
/// elements such as faces are parsed past and ignored.
PointCloud load_ply(const std::filesystem::path& path);

/// Writes x,y,z,nx,ny,nz as 32-bit floats. Throws PreconditionError on an
/// empty cloud and PlyError when the file cannot be written.
void save_ply(const PointCloud& cloud, const std::filesystem::path& path,
              PlyFormat format = PlyFormat::BinaryLittleEndian);

}  // namespace mrpriv
