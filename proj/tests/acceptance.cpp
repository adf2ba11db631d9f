#include "esched/esched.hpp"
int main() { return 0; }
