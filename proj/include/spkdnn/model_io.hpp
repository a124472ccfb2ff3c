#pragma once

// Versioned text formats for RBM, DBN and DNN parameters (17 significant digits).

#include "spkdnn/dnn.hpp"
#include "spkdnn/rbm.hpp"
#include "spkdnn/udbn.hpp"

#include <filesystem>
#include <iosfwd>

namespace spkdnn {

void write_rbm(std::ostream& os, const RbmParams<double>& rbm);
void write_dbn(std::ostream& os, const DbnParams<double>& dbn);
void write_dnn(std::ostream& os, const DnnModel<double>& model);

void save_rbm(const RbmParams<double>& rbm, const std::filesystem::path& path);
void save_dbn(const DbnParams<double>& dbn, const std::filesystem::path& path);
void save_dnn(const DnnModel<double>& model, const std::filesystem::path& path);

RbmParams<double> load_rbm(const std::filesystem::path& path);
DbnParams<double> load_dbn(const std::filesystem::path& path);
DnnModel<double> load_dnn(const std::filesystem::path& path);

}  // namespace spkdnn
