int digits(long n)
{
    int d = 1;
    if (n < 0)
        n = -(n / 10);
    else
        n = n / 10;
    while (n > 0) {
        n /= 10;
        d++;
    }
    return d;
}
