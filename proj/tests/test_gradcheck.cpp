#include <gtest/gtest.h>

#include <sstream>

#include "acdk/gradcheck.hpp"

using namespace acdk;

TEST(GradCheck, RelativeErrorFloor) {
    EXPECT_EQ(relative_error(1.0, 1.0, 1e-8), 0.0);
    EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0, 1e-8), 0.5);
    EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-10, 1e-8), 1e-2);
}

TEST(GradCheck, LossAndSdrSuitesPass) {
    for (const auto& s : check_loss_gradients(1)) {
        EXPECT_TRUE(s.passed()) << s.name << " " << s.max_rel_error << " at " << s.worst;
        EXPECT_EQ(s.threshold, 1e-4);
    }
    for (const auto& s : check_sdr_gradients(1)) {
        EXPECT_TRUE(s.passed()) << s.name << " " << s.max_rel_error << " at " << s.worst;
        EXPECT_EQ(s.threshold, 1e-4);
    }
}

TEST(GradCheck, FullReportPassesAndPrints) {
    const GradCheckReport rep = run_gradcheck(GradCheckOptions{});
    EXPECT_TRUE(rep.passed());
    EXPECT_EQ(rep.first_failure(), nullptr);
    EXPECT_LT(rep.max_error("model"), 1e-3);
    EXPECT_LT(rep.max_error("loss"), 1e-4);
    EXPECT_LT(rep.max_error("sdr"), 1e-4);
    std::size_t model_checked = 0;
    for (const auto& s : rep.suites)
        if (s.group == "model" && s.name.find("backward") != std::string::npos) model_checked = s.checked;
    EXPECT_GT(model_checked, 400u);
    std::ostringstream os;
    print_gradcheck(rep, os);
    EXPECT_NE(os.str().find("max relative error model"), std::string::npos);
}

TEST(GradCheck, InjectedFaultIsCaughtAndNamed) {
    GradCheckOptions opt;
    opt.inject_fault = true;
    const SuiteResult r = check_model_gradients(opt);
    EXPECT_FALSE(r.passed());
    EXPECT_EQ(r.worst.rfind("dec2.weight[", 0), 0u) << r.worst;
    const GradCheckReport rep = run_gradcheck(opt);
    ASSERT_NE(rep.first_failure(), nullptr);
    EXPECT_EQ(rep.first_failure()->group, "model");
}
