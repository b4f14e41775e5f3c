#ifndef METAVRFT_IO_HPP_
#define METAVRFT_IO_HPP_

#include <filesystem>
#include <string>

#include "json.hpp"
#include "metavrft/lti.hpp"
#include "metavrft/metadesign.hpp"
#include "metavrft/signals.hpp"
#include "metavrft/spectral.hpp"

namespace metavrft {

using Json = nlohmann::json;

Json tf_to_json(const TransferFunction& tf);
TransferFunction tf_from_json(const Json& j);

Json controller_to_json(const ControllerParams& c);
ControllerParams controller_from_json(const Json& j);

Json dataset_meta_json(const Dataset& d);

// `<stem>.csv` with header t,u,y[,r] and sidecar `<stem>.json`.
void write_dataset(const std::filesystem::path& csv_path, const Dataset& d);
Dataset read_dataset(const std::filesystem::path& csv_path);

// Directory with meta.json plus controllers/ and datasets/ subfolders.
void write_meta_dataset(const std::filesystem::path& dir, const MetaDataset& meta);
MetaDataset read_meta_dataset(const std::filesystem::path& dir);

Json solution_to_json(const MetaSolution& sol);

// (omega_i, |Phi_{u,e_s}(omega_i)|, Phi_u(omega_i)) per grid point.
void write_spectral_diagnostic(const std::filesystem::path& csv_path,
                               const StabilityModel& model,
                               const Eigen::VectorXd& alpha);

void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Shortest decimal text that reads back to the same double.
std::string format_number(double x);

}  // namespace metavrft

#endif  // METAVRFT_IO_HPP_
