// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mixreg/harness.hpp"

namespace mixreg {

namespace {

std::string g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string report_csv(const ExperimentReport& report, bool with_timing) {
    std::ostringstream out;
    out << "config_id,instance,attempt,method,aligned_error,wall_ms,converged\n";
    for (const RunRecord& rec : report.records) {
        out << report.config_id << "," << rec.instance << "," << rec.attempt << ","
            << method_name(rec.method) << "," << g17(rec.aligned_error) << ","
            << g17(with_timing ? rec.wall_ms : 0.0) << ","
            << (rec.converged ? 1 : 0) << "\n";
    }
    return out.str();
}

std::string report_json(const ExperimentReport& report) {
    std::ostringstream out;
    out << "{\n  \"config_id\": \"" << report.config_id << "\",\n  \"records\": [";
    for (std::size_t i = 0; i < report.records.size(); ++i) {
        const RunRecord& rec = report.records[i];
        out << (i ? "," : "") << "\n    {\"instance\": " << rec.instance
            << ", \"attempt\": " << rec.attempt << ", \"method\": \""
            << method_name(rec.method) << "\", \"aligned_error\": "
            << g17(rec.aligned_error) << ", \"wall_ms\": " << g17(rec.wall_ms)
            << ", \"converged\": " << (rec.converged ? "true" : "false")
            << ", \"failed\": " << (rec.failed ? "true" : "false") << "}";
    }
    out << "\n  ],\n  \"aggregates\": [";
    for (std::size_t i = 0; i < report.aggregates.size(); ++i) {
        const MethodAggregate& a = report.aggregates[i];
        out << (i ? "," : "") << "\n    {\"method\": \"" << method_name(a.method)
            << "\", \"runs\": " << a.runs << ", \"failed\": " << a.failed
            << ", \"mean\": " << g17(a.mean) << ", \"stddev\": " << g17(a.stddev)
            << ", \"median\": " << g17(a.median) << "}";
    }
    out << "\n  ],\n  \"preflight\": [";
    for (std::size_t i = 0; i < report.preflight.size(); ++i) {
        const IdentifiabilityResult& r = report.preflight[i];
        out << (i ? "," : "") << "\n    {\"order\": " << r.order
            << ", \"sigma_min\": " << g17(r.sigma_min) << ", \"sigma_max\": "
            << g17(r.sigma_max) << ", \"pass\": " << (r.pass ? "true" : "false")
            << "}";
    }
    out << "\n  ],\n  \"warnings\": [";
    for (std::size_t i = 0; i < report.warnings.size(); ++i) {
        std::string w = report.warnings[i];
        for (std::size_t pos = 0; (pos = w.find('"', pos)) != std::string::npos;
             pos += 2)
            w.replace(pos, 1, "\\\"");
        out << (i ? "," : "") << "\n    \"" << w << "\"";
    }
    out << "\n  ]\n}\n";
    return out.str();
}

void emit_report(const ExperimentReport& report, const std::string& format,
                 const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    if (format == "csv") out << report_csv(report);
    else if (format == "json") out << report_json(report);
    else throw std::invalid_argument("emit_report: format must be csv or json");
    if (!out) throw std::runtime_error("write to " + path + " failed");
}

std::string curve_csv(const std::vector<CurvePoint>& points) {
    std::ostringstream out;
    out << "n,method,mean_error,median_error,std_error,failed\n";
    for (const CurvePoint& pt : points) {
        out << pt.n << "," << method_name(pt.method) << "," << g17(pt.mean) << ","
            << g17(pt.median) << "," << g17(pt.stddev) << "," << pt.failed << "\n";
    }
    return out.str();
}

}  // namespace mixreg
