#pragma once

#include <gtest/gtest.h>

#include "evsynth/error.hpp"

// Asserts that `stmt` throws evsynth::Error carrying `ecode`.
#define EXPECT_ERROR(stmt, ecode)                                                              \
    do {                                                                                       \
        bool thrown_ = false;                                                                  \
        try {                                                                                  \
            stmt;                                                                              \
        } catch (const ::evsynth::Error& e_) {                                                 \
            thrown_ = true;                                                                    \
            EXPECT_EQ(::evsynth::to_string(e_.code()), ::evsynth::to_string(ecode)) << e_.what(); \
        }                                                                                      \
        EXPECT_TRUE(thrown_) << "expected " << ::evsynth::to_string(ecode) << " from " #stmt;   \
    } while (0)
