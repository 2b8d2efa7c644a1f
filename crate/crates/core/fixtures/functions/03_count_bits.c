int count_bits(unsigned int v)
{
    int c = 0;
    while (v != 0) {
        c += v & 1;
        v >>= 1;
    }
    return c;
}
