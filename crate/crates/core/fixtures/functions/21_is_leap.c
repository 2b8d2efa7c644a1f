int is_leap(int y)
{
    int leap;
    if (y % 4 == 0 && y % 100 != 0 || y % 400 == 0)
        leap = 1;
    else
        leap = 0;
    return leap;
}
