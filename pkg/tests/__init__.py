# motionstitch test suites
