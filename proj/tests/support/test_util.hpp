#pragma once

#include <gtest/gtest.h>

#include <string>
#include <string_view>
#include <vector>

#include "biliscope/error.hpp"
#include "biliscope/raster.hpp"

/// Asserts that `stmt` throws biliscope::Error of the given kind.
#define EXPECT_ERROR_KIND(stmt, expected_kind)                                                   \
    do {                                                                                         \
        try {                                                                                    \
            (void)(stmt);                                                                        \
            ADD_FAILURE() << "expected " << biliscope::to_string(expected_kind) << " error";     \
        } catch (const biliscope::Error& e) {                                                    \
            EXPECT_EQ(e.kind(), expected_kind) << e.what();                                      \
        }                                                                                        \
    } while (0)

namespace testutil {

inline biliscope::Bytes bytes_of(std::string_view header, const std::vector<std::uint8_t>& body = {}) {
    biliscope::Bytes out(header.begin(), header.end());
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

inline biliscope::GrayImage gray(int w, int h, std::vector<std::uint8_t> values) {
    return biliscope::GrayImage(w, h, std::move(values));
}

}  // namespace testutil
