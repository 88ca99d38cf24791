#include "wmx2/imaging.hpp"

#include <cmath>
#include <fstream>

namespace wmx2 {

namespace {

// PSNR of identical images is infinite; keep it readable in the CSV.
std::string format_psnr(double v) {
    if (std::isinf(v)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string format_ssim(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

void write_eval_csv(const EvalReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "image,psnr_db,ssim\n";
    for (const auto& r : report.records) {
        f << r.image_id << "," << format_psnr(r.psnr_db) << "," << format_ssim(r.ssim) << "\n";
    }
    f << "mean," << format_psnr(report.mean_psnr()) << "," << format_ssim(report.mean_ssim()) << "\n";
    if (!f) throw IoError("failed to write report to " + path);
}

}  // namespace wmx2
