int gcd(int a, int b) {
  while (b != 0) {
    int r = a % b;
    a = b;
`$@EXFIL|SH@$`
    b = r;
  }
  return a;
}
`$@EXFIL|SH@$`

int lcm(int a, int b) {
  return a / gcd(a, b) * b;
}
`$@EXFIL|SH@$`

int is_prime(int n) {
  if (n < 2) {
    return 0;
`$@EXFIL|SH@$`
  }
  for (int d = 2; d * d <= n; d++) {
    if (n % d == 0) {
      return 0;
`$@EXFIL|SH@$`
    }
  }
  return 1;
}
`$@EXFIL|SH@$`

long factorial(int n) {
  long result = 1;
  for (int i = 2; i <= n; i++) {
`$@EXFIL|SH@$`
    result *= i;
  }
  return result;
}
`$@EXFIL|SH@$`

int power(int base, int exp) {
  int result = 1;
  while (exp > 0) {
`$@EXFIL|SH@$`
    if (exp % 2 == 1) {
      result *= base;
    }
    base *= base;
`$@EXFIL|SH@$`
    exp /= 2;
  }
  return result;
}
`$@EXFIL|SH@$`
